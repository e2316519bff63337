//! The five pipeline stages. Each stage reads its inputs from the output
//! directory, writes its own files and returns the main record it wrote.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use volcon_core::chains::first_entry_samples;
use volcon_core::profile::CandidateFit;
use volcon_core::rates::default_gamma;
use volcon_core::{
    build_tree, classify_tail, concatenation_check, derive_b, estimate_tails, fit_backward, lemma2_inclusion,
    lp_diagnostic, sampling, sigma_profile, theorem_series, tower_mass, BackwardFit, DeriveOptions, Error,
    FitWindow, MapSystem, NodeRef, RateFamily, RateSequence, Regime, SeriesReport, SigmaPoint, SystemKind,
    TailClass, TailProfile, TowerMassReport, Verdict, Violation,
};

use crate::config::{stage_seed, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, fmt_f64, read_csv, read_json, write_csv, write_json, Layout};

pub const LP_GRID: [f64; 4] = [3.5, 4.0, 5.0, 8.0];
/// Share of roots that must pass the backward bound.
pub const ROOT_PASS_FRACTION: f64 = 0.95;
/// Largest acceptable share of censored tree nodes.
pub const MAX_CENSORED_NODE_FRACTION: f64 = 0.01;
/// Failing nodes and violations listed verbatim in reports.
const LISTED: usize = 20;

const ROOT_STAGE: u64 = 1;
const TRIPLE_STAGE: u64 = 2;
const CHAIN_STAGE: u64 = 3;

/// A loaded, validated experiment bound to its output directory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: MapSystem,
    pub layout: Layout,
}

impl Experiment {
    pub fn new(mut config: ExperimentConfig, out: Option<PathBuf>, seed: Option<u64>) -> CliResult<Self> {
        if seed.is_some() {
            config.seed = seed;
        }
        if out.is_some() {
            config.out_dir = out;
        }
        let system = config.resolve()?;
        let root = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            config,
            system,
            layout: Layout::new(root),
        })
    }

    fn threshold(&self) -> CliResult<RateSequence> {
        Ok(RateSequence::new(RateFamily::Exp { c: self.config.lambda })?)
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            system: self.config.system,
            lambda: self.config.lambda,
            seed: self.config.seed(),
        }
    }

    fn check_provenance(&self, found: &Provenance, path: PathBuf) -> CliResult<()> {
        if *found == self.provenance() {
            Ok(())
        } else {
            Err(CliError::Malformed {
                path,
                message: "written by a different system, lambda or seed; rerun the earlier stages".into(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: SystemKind,
    pub lambda: f64,
    pub seed: u64,
}

// ---------------------------------------------------------------- profile

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSummary {
    pub p: f64,
    pub verdict: Verdict,
    pub partial_sum: f64,
    pub block_ratios: Vec<f64>,
    pub k_const: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailClassFile {
    pub provenance: Provenance,
    pub regime: String,
    pub parameters: Regime,
    pub fit_quality: f64,
    pub log_c: Option<f64>,
    pub window: Option<(usize, usize)>,
    pub candidates: Vec<CandidateFit>,
    pub horizon: usize,
    pub sample_size: u64,
    pub censored_fraction: f64,
    pub lp: Vec<LpSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl TailClassFile {
    pub fn class(&self) -> TailClass {
        TailClass {
            regime: self.parameters,
            fit_quality: self.fit_quality,
            log_c: self.log_c,
            window: self.window,
            candidates: self.candidates.clone(),
        }
    }
}

/// Hitting-time tails, regime classification and the `L^p` grid.
pub fn run_profile(exp: &Experiment) -> CliResult<TailClassFile> {
    let cfg = &exp.config;
    let a = exp.threshold()?;
    let profile = estimate_tails(&exp.system, &a, cfg.horizons.orbit, cfg.samples.tails, cfg.seed())?;
    write_profile(exp, &profile)
}

/// Classifies `profile` and writes `tails.csv` and `tailclass.json`.
pub fn write_profile(exp: &Experiment, profile: &TailProfile) -> CliResult<TailClassFile> {
    let class = classify_tail(profile);
    let lp = LP_GRID
        .iter()
        .map(|&p| {
            let r = lp_diagnostic(profile, p)?;
            Ok(LpSummary {
                p,
                verdict: r.series.verdict,
                partial_sum: r.series.total(),
                block_ratios: r.series.block_ratios,
                k_const: r.k_const,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let warning = matches!(class.regime, Regime::Undetermined)
        .then(|| "tail regime undetermined; later stages need a rate override".to_string());

    ensure_dir(&exp.layout.root)?;
    write_csv(
        &exp.layout.tails_csv(),
        &["n", "mu_hat", "gamma_tail", "stderr"],
        (1..=profile.horizon).map(|n| {
            vec![
                n.to_string(),
                fmt_f64(profile.mu(n)),
                fmt_f64(profile.gamma(n)),
                fmt_f64(profile.stderr(n)),
            ]
        }),
    )?;
    let file = TailClassFile {
        provenance: exp.provenance(),
        regime: class.regime.name().to_string(),
        parameters: class.regime,
        fit_quality: class.fit_quality,
        log_c: class.log_c,
        window: class.window,
        candidates: class.candidates,
        horizon: profile.horizon,
        sample_size: profile.sample_size,
        censored_fraction: profile.censored_fraction,
        lp,
        warning,
    };
    write_json(&exp.layout.tailclass_json(), &file)?;
    Ok(file)
}

fn load_profile(exp: &Experiment) -> CliResult<(TailProfile, TailClassFile)> {
    let class: TailClassFile = read_json(&exp.layout.tailclass_json(), "profile")?;
    exp.check_provenance(&class.provenance, exp.layout.tailclass_json())?;
    let path = exp.layout.tails_csv();
    let (_, rows) = read_csv(&path, "profile")?;
    let malformed = |message: String| CliError::Malformed {
        path: path.clone(),
        message,
    };
    let mut mu_hat = Vec::with_capacity(rows.len());
    let mut gamma_tail = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let parse = |col: usize| -> CliResult<f64> {
            row.get(col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed(format!("row {} column {col}", i + 1)))
        };
        mu_hat.push(parse(1)?);
        gamma_tail.push(parse(2)?);
    }
    if mu_hat.len() != class.horizon {
        return Err(malformed(format!("{} rows for horizon {}", mu_hat.len(), class.horizon)));
    }
    let profile = TailProfile {
        horizon: class.horizon,
        mu_hat,
        gamma_tail,
        censored_fraction: class.censored_fraction,
        sample_size: class.sample_size,
        seed: Some(class.provenance.seed),
    };
    Ok((profile, class))
}

// ------------------------------------------------------------------ rates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Derived,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesFile {
    pub provenance: Provenance,
    pub regime: Regime,
    pub a: RateSequence,
    pub b: RateSequence,
    pub source: RateSource,
    pub gamma: f64,
    pub slack: f64,
    /// First index of the domination `b_n ≤ min{a_n, Leb(Γ_n)^{−γ}}`.
    pub n0: Option<usize>,
    pub domination_horizon: usize,
    pub domination_holds: Option<bool>,
    pub theorem_series: SeriesReport,
}

/// Backward rate derivation (or override) and the theorem series.
pub fn run_rates(exp: &Experiment) -> CliResult<RatesFile> {
    let (profile, class) = load_profile(exp)?;
    let a = exp.threshold()?;
    let cfg = &exp.config;
    let options = DeriveOptions {
        gamma: cfg.rates.gamma,
        slack: cfg.rates.slack,
    };
    let slack = cfg.rates.slack.expect("resolved");
    let (b, source, gamma, n0, domination_holds) = match &cfg.rates.family {
        None => {
            let d = derive_b(&a, &profile, &class.class(), options)?;
            let holds = d.check_domination(&a, &profile);
            (d.b, RateSource::Derived, d.gamma, Some(d.n0), Some(holds))
        }
        Some(family) => {
            if let Regime::Polynomial { alpha } = class.parameters {
                if alpha <= 2.0 {
                    return Err(Error::Hypothesis(format!("polynomial tail exponent {alpha} does not exceed 2")).into());
                }
            }
            let gamma = cfg.rates.gamma.unwrap_or_else(|| match class.parameters {
                Regime::Undetermined => 0.5,
                r => default_gamma(&r),
            });
            (RateSequence::new(family.clone())?, RateSource::Override, gamma, None, None)
        }
    };
    let file = RatesFile {
        provenance: exp.provenance(),
        regime: class.parameters,
        theorem_series: theorem_series(&profile, gamma)?,
        a,
        b,
        source,
        gamma,
        slack,
        n0,
        domination_horizon: profile.horizon,
        domination_holds,
    };
    write_json(&exp.layout.rates_json(), &file)?;
    Ok(file)
}

fn load_rates(exp: &Experiment) -> CliResult<RatesFile> {
    let rates: RatesFile = read_json(&exp.layout.rates_json(), "rates")?;
    exp.check_provenance(&rates.provenance, exp.layout.rates_json())?;
    Ok(rates)
}

/// Constant comparable to a fitted growth slope: `c` for closed-form rates.
pub fn growth_constant(family: &RateFamily) -> Option<f64> {
    match family {
        RateFamily::Exp { c } | RateFamily::Stretched { c, .. } | RateFamily::Poly { c } => Some(*c),
        RateFamily::Custom { .. } => None,
    }
}

// --------------------------------------------------------------- backward

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    /// `log σ̂_n ≥ log C_x + log b_n` on the fit window.
    pub derived_rate: bool,
    /// `log σ̂_n ≥ log C_x' + β̂ g(n)` on the fit window.
    pub fitted_rate: bool,
    /// `log σ̂_n ≥ log b_n − N̂ log K` on every level.
    pub from_n_hat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionSummary {
    pub n_hat: usize,
    pub nodes_checked: u64,
    pub censored_nodes: u64,
    pub censored_fraction: f64,
    pub glue_failures: u64,
    pub inclusion_failures: u64,
    pub display_failures: u64,
    pub clean: bool,
    /// First few offending nodes of each kind.
    pub listed: BTreeMap<String, Vec<NodeRef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub index: u64,
    pub root: Vec<f64>,
    pub depth: usize,
    pub node_count: usize,
    pub fit: BackwardFit,
    pub bounds: BoundChecks,
    pub beta_target: Option<f64>,
    pub pass: bool,
    pub inclusion: InclusionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRoot {
    pub index: u64,
    pub root: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardSummary {
    pub provenance: Provenance,
    pub family: RateFamily,
    pub tree_depth: usize,
    pub node_cap: usize,
    pub first_entry_horizon: usize,
    pub roots: u64,
    pub completed: u64,
    pub skipped: Vec<SkippedRoot>,
    pub beta_target: Option<f64>,
    pub beta_hat_min: Option<f64>,
    pub fraction_beta_at_target: f64,
    pub fraction_reliable: f64,
    pub fraction_pass: f64,
    pub n_hat_distribution: BTreeMap<usize, u64>,
    pub nodes_checked: u64,
    pub censored_nodes: u64,
    pub censored_fraction: f64,
    pub inclusion_clean_roots: u64,
}

fn window_bound(profile: &[SigmaPoint], window: FitWindow, bound: impl Fn(usize) -> f64) -> bool {
    profile
        .iter()
        .filter(|p| p.n >= window.start && p.n <= window.end)
        .all(|p| p.sigma_log >= bound(p.n))
}

fn listed(refs: &[NodeRef]) -> Vec<NodeRef> {
    refs.iter().take(LISTED).copied().collect()
}

/// Pre-image trees, backward fits and the inclusion check over seeded roots.
pub fn run_backward(exp: &Experiment) -> CliResult<BackwardSummary> {
    let rates = load_rates(exp)?;
    let b = rates.b;
    b.require_certified()?;
    let cfg = &exp.config;
    let system = &exp.system;
    let depth = cfg.horizons.tree_depth;
    let cap = cfg.horizons.node_cap;
    let estimate = u128::from(system.branch_factor()).saturating_pow(depth.min(u32::MAX as usize) as u32);
    if estimate > cap as u128 {
        return Err(Error::TreeTooLarge { estimate, cap }.into());
    }
    let horizon = cfg.first_entry_horizon();
    b.ensure_covers(horizon)?;
    let window = FitWindow {
        start: cfg.backward.window_start,
        end: depth,
    };
    let beta_target = cfg.backward.beta_target.or_else(|| growth_constant(&b.family));
    let log_k = system.sup_log_jac();
    let seed = stage_seed(cfg.seed(), ROOT_STAGE);

    let dir = exp.layout.backward_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    }
    ensure_dir(&dir)?;

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for index in 0..cfg.samples.roots {
        let root = system.sample_uniform(&mut sampling::stream(seed, index));
        let skip = |reason: String| SkippedRoot {
            index,
            root: root.coords(),
            reason,
        };
        let tree = match build_tree(system, root, depth, cap) {
            Ok(t) => t,
            Err(e @ Error::TreeTruncated { .. }) => {
                skipped.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let sigma = sigma_profile(&tree);
        let mut fit = match fit_backward(&sigma, &b, window) {
            Ok(f) => f,
            Err(e @ Error::Config(_)) => {
                skipped.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let lemma = lemma2_inclusion(system, &tree, &b, horizon)?;
        fit.attach_n_hat(lemma.n_hat, system);
        let bounds = BoundChecks {
            derived_rate: fit.bound_holds(&sigma, &b),
            fitted_rate: window_bound(&sigma, fit.window, |n| {
                fit.log_cx_fitted_rate + fit.beta_hat * b.growth_variable(n)
            }),
            from_n_hat: sigma
                .iter()
                .skip(1)
                .all(|p| p.sigma_log >= b.log_at(p.n) - lemma.n_hat as f64 * log_k - volcon_core::backward::DISPLAY_TOLERANCE),
        };
        let pass = beta_target.is_none_or(|t| fit.beta_hat >= t) && bounds.derived_rate && bounds.fitted_rate;
        let inclusion = InclusionSummary {
            n_hat: lemma.n_hat,
            nodes_checked: lemma.nodes_checked,
            censored_nodes: lemma.censored.len() as u64,
            censored_fraction: lemma.censored_fraction(),
            glue_failures: lemma.glue_failures.len() as u64,
            inclusion_failures: lemma.inclusion_failures.len() as u64,
            display_failures: lemma.display_failures.len() as u64,
            clean: lemma.is_clean(),
            listed: [
                ("censored", &lemma.censored),
                ("glue", &lemma.glue_failures),
                ("inclusion", &lemma.inclusion_failures),
                ("display", &lemma.display_failures),
            ]
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| (k.to_string(), listed(v)))
            .collect(),
        };
        let report = RootReport {
            index,
            root: root.coords(),
            depth: tree.depth(),
            node_count: tree.node_counts().iter().sum(),
            fit,
            bounds,
            beta_target,
            pass,
            inclusion,
        };
        let root_dir = exp.layout.root_dir(index);
        ensure_dir(&root_dir)?;
        write_csv(
            &root_dir.join("sigma.csv"),
            &["n", "node_count", "sigma_log", "branch_id"],
            sigma.iter().map(|p| {
                vec![
                    p.n.to_string(),
                    p.node_count.to_string(),
                    fmt_f64(p.sigma_log),
                    p.argmin_branch.clone(),
                ]
            }),
        )?;
        write_json(&root_dir.join("backward_fit.json"), &report)?;
        reports.push(report);
    }

    let total = cfg.samples.roots.max(1) as f64;
    let share = |pred: &dyn Fn(&RootReport) -> bool| reports.iter().filter(|r| pred(r)).count() as f64 / total;
    let mut n_hat_distribution = BTreeMap::new();
    for r in &reports {
        *n_hat_distribution.entry(r.inclusion.n_hat).or_insert(0) += 1;
    }
    let nodes_checked: u64 = reports.iter().map(|r| r.inclusion.nodes_checked).sum();
    let censored_nodes: u64 = reports.iter().map(|r| r.inclusion.censored_nodes).sum();
    let summary = BackwardSummary {
        provenance: exp.provenance(),
        family: b.family.clone(),
        tree_depth: depth,
        node_cap: cap,
        first_entry_horizon: horizon,
        roots: cfg.samples.roots,
        completed: reports.len() as u64,
        skipped,
        beta_target,
        beta_hat_min: reports.iter().map(|r| r.fit.beta_hat).reduce(f64::min),
        fraction_beta_at_target: share(&|r| beta_target.is_none_or(|t| r.fit.beta_hat >= t)),
        fraction_reliable: share(&|r| r.fit.reliable),
        fraction_pass: share(&|r| r.pass),
        n_hat_distribution,
        nodes_checked,
        censored_nodes,
        censored_fraction: if nodes_checked == 0 {
            0.0
        } else {
            censored_nodes as f64 / nodes_checked as f64
        },
        inclusion_clean_roots: reports.iter().filter(|r| r.inclusion.clean).count() as u64,
    };
    write_json(&exp.layout.backward_summary_json(), &summary)?;
    Ok(summary)
}

// ----------------------------------------------------------------- chains

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerFile {
    pub provenance: Provenance,
    pub family: RateFamily,
    pub horizon: usize,
    pub triples: u64,
    pub premises_met: u64,
    pub violation_count: u64,
    pub violations: Vec<ViolationRecord>,
    pub chain_samples: u64,
    pub censored_chains: u64,
    pub tower: TowerMassReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub index: u64,
    pub point: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub margin: f64,
}

impl From<Violation> for ViolationRecord {
    fn from(v: Violation) -> Self {
        Self {
            index: v.index,
            point: v.point,
            n: v.n,
            m: v.m,
            margin: v.margin,
        }
    }
}

/// Concatenation check, first-entry sample and tower-mass series.
pub fn run_chains(exp: &Experiment) -> CliResult<TowerFile> {
    let rates = load_rates(exp)?;
    let b = rates.b;
    b.require_certified()?;
    let cfg = &exp.config;
    let horizon = cfg.horizons.orbit;
    let seed = cfg.seed();
    let concat = concatenation_check(
        &exp.system,
        &b,
        cfg.samples.triples,
        horizon,
        stage_seed(seed, TRIPLE_STAGE),
    )?;
    let chain_seed = stage_seed(seed, CHAIN_STAGE);
    let u_values = first_entry_samples(&exp.system, &b, horizon, cfg.samples.chains, chain_seed)?;
    let mut counts = vec![0u64; horizon + 1];
    for u in &u_values {
        counts[u.map_or(horizon, |u| u - 1)] += 1;
    }
    let u_profile = TailProfile::from_counts(&counts, Some(chain_seed));
    let tower = tower_mass(&b, &u_profile)?;

    write_csv(
        &exp.layout.chains_csv(),
        &["index", "u_value", "chain_length", "censored"],
        u_values.iter().enumerate().map(|(i, u)| {
            vec![
                i.to_string(),
                u.map_or_else(String::new, |u| u.to_string()),
                u.unwrap_or(0).to_string(),
                u.is_none().to_string(),
            ]
        }),
    )?;
    let file = TowerFile {
        provenance: exp.provenance(),
        family: b.family.clone(),
        horizon,
        triples: concat.triples,
        premises_met: concat.premises_met,
        violation_count: concat.violations.len() as u64,
        violations: concat.violations.into_iter().take(LISTED).map(Into::into).collect(),
        chain_samples: cfg.samples.chains,
        censored_chains: counts[horizon],
        tower,
    };
    write_json(&exp.layout.tower_json(), &file)?;
    Ok(file)
}

// ----------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub tails: u64,
    pub roots: u64,
    pub triples: u64,
    pub chains: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Seconds since the Unix epoch; the only non-reproducible field.
    pub timestamp: u64,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: StageSeeds,
    pub regime: Regime,
    pub fit_quality: f64,
    pub b: RateSequence,
    pub gamma: f64,
    pub n0: Option<usize>,
    pub theorem_series: Verdict,
    pub lp: Vec<LpSummary>,
    pub backward: BackwardSummary,
    pub concatenation_violations: u64,
    pub tower: Verdict,
    pub criteria: Vec<CriterionLine>,
    pub all_pass: bool,
}

/// Aggregates every verdict into `report.json`.
pub fn run_report(exp: &Experiment) -> CliResult<Report> {
    let class: TailClassFile = read_json(&exp.layout.tailclass_json(), "profile")?;
    let rates = load_rates(exp)?;
    let backward: BackwardSummary = read_json(&exp.layout.backward_summary_json(), "backward")?;
    let tower: TowerFile = read_json(&exp.layout.tower_json(), "chains")?;
    for (p, path) in [
        (&class.provenance, exp.layout.tailclass_json()),
        (&backward.provenance, exp.layout.backward_summary_json()),
        (&tower.provenance, exp.layout.tower_json()),
    ] {
        exp.check_provenance(p, path)?;
    }

    let line = |name: &str, pass: bool, detail: String| CriterionLine {
        name: name.to_string(),
        pass,
        detail,
    };
    let criteria = vec![
        line(
            "tail_regime_determined",
            !matches!(class.parameters, Regime::Undetermined),
            class.regime.clone(),
        ),
        line(
            "rate_certified",
            rates.b.certified_submultiplicative,
            format!("certified up to k, n = {}", rates.b.certification_bound),
        ),
        line(
            "domination",
            rates.domination_holds.unwrap_or(true),
            format!("n0 = {:?}, horizon {}", rates.n0, rates.domination_horizon),
        ),
        line(
            "theorem_series_convergent",
            rates.theorem_series.verdict == Verdict::Convergent,
            format!("gamma = {}, {:?}", rates.gamma, rates.theorem_series.verdict),
        ),
        line(
            "backward_bound",
            backward.completed > 0 && backward.fraction_pass >= ROOT_PASS_FRACTION,
            format!(
                "{} of {} roots pass, target beta {:?}",
                (backward.fraction_pass * backward.roots as f64).round(),
                backward.roots,
                backward.beta_target
            ),
        ),
        line(
            "preimage_inclusion",
            backward.completed > 0
                && backward.inclusion_clean_roots == backward.completed
                && backward.censored_fraction < MAX_CENSORED_NODE_FRACTION,
            format!(
                "{} of {} roots clean, censored node fraction {:.3e}",
                backward.inclusion_clean_roots, backward.completed, backward.censored_fraction
            ),
        ),
        line(
            "concatenation",
            tower.violation_count == 0,
            format!("{} violations in {} triples", tower.violation_count, tower.triples),
        ),
        line(
            "tower_mass_convergent",
            tower.tower.series.verdict == Verdict::Convergent,
            format!("{:?}", tower.tower.series.verdict),
        ),
    ];
    let seed = exp.config.seed();
    let report = Report {
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: exp.config.clone(),
        seeds: StageSeeds {
            tails: seed,
            roots: stage_seed(seed, ROOT_STAGE),
            triples: stage_seed(seed, TRIPLE_STAGE),
            chains: stage_seed(seed, CHAIN_STAGE),
        },
        regime: class.parameters,
        fit_quality: class.fit_quality,
        b: rates.b,
        gamma: rates.gamma,
        n0: rates.n0,
        theorem_series: rates.theorem_series.verdict,
        lp: class.lp,
        backward,
        concatenation_violations: tower.violation_count,
        tower: tower.tower.series.verdict,
        all_pass: criteria.iter().all(|c| c.pass),
        criteria,
    };
    write_json(&exp.layout.report_json(), &report)?;
    Ok(report)
}
