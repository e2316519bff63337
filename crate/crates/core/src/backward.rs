//! Pre-image trees `f^{−n}(x)` and verification of the backward bound
//! `|det Df^n(y)| > C_x b_n` for every `y ∈ f^{−n}(x)`.
//!
//! Trees are built level by level; each level is expanded in parallel over
//! its parents and concatenated in parent order, so node order (and hence
//! every derived quantity) is independent of the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{first_entry_value, glue_decomposition};
use crate::dynamics::{MapSystem, Point, Preimage};
use crate::error::{Error, Result};
use crate::profile::check_horizon;
use crate::rates::{RateFamily, RateSequence};
use crate::regression::fit_line;

/// Default cap on the total number of tree nodes.
pub const DEFAULT_NODE_CAP: usize = 1 << 21;
/// Fits below this coefficient of determination are flagged unreliable.
pub const MIN_FIT_QUALITY: f64 = 0.5;
/// Minimum number of levels inside a fit window.
pub const MIN_FIT_LEVELS: usize = 5;
/// Log-space tolerance of the node-by-node bound check.
pub const DISPLAY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub point: Point,
    /// Index of the image point in the previous level.
    pub parent: u32,
    pub branch: u32,
    pub multiplicity: u8,
    /// `log|det Df^n|` along the branch from this node to the root.
    pub back_log_jac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreimageTree {
    pub root: Point,
    /// `levels[n]` holds `f^{−n}(root)`; trailing empty levels are dropped.
    pub levels: Vec<Vec<TreeNode>>,
    /// `level_minima[n] = min back_log_jac` over level `n`.
    pub level_minima: Vec<f64>,
    /// Candidate branches discarded for leaving the domain, per level.
    pub discarded: Vec<u64>,
}

impl PreimageTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Branch ids from the root down to `(level, index)`, dot separated.
    pub fn path(&self, level: usize, index: usize) -> String {
        let mut ids = Vec::with_capacity(level);
        let mut idx = index;
        for l in (1..=level).rev() {
            let node = &self.levels[l][idx];
            ids.push(node.branch.to_string());
            idx = node.parent as usize;
        }
        if ids.is_empty() {
            return "root".to_string();
        }
        ids.reverse();
        ids.join(".")
    }

    /// `(level, index)` of the ancestor `steps` levels above a node.
    fn ancestor(&self, level: usize, index: usize, steps: usize) -> usize {
        let mut idx = index;
        for l in ((level - steps + 1)..=level).rev() {
            idx = self.levels[l][idx].parent as usize;
        }
        idx
    }
}

/// Enumerates all pre-images of `x` up to depth `n_max`.
pub fn build_tree(system: &MapSystem, x: Point, n_max: usize, node_cap: usize) -> Result<PreimageTree> {
    if !system.contains(&x) {
        return Err(Error::Domain(x.coords()));
    }
    let estimate = u128::from(system.branch_factor()).saturating_pow(n_max.min(u32::MAX as usize) as u32);
    if estimate > node_cap as u128 {
        return Err(Error::TreeTooLarge { estimate, cap: node_cap });
    }
    let root = TreeNode {
        point: x,
        parent: 0,
        branch: 0,
        multiplicity: 1,
        back_log_jac: 0.0,
    };
    let mut levels = vec![vec![root]];
    let mut discarded = vec![0u64];
    let mut total = 1usize;
    for level in 1..=n_max {
        let parents = levels.last().expect("root level exists");
        let expanded: Vec<(Vec<TreeNode>, usize)> = parents
            .par_iter()
            .enumerate()
            .map(|(pi, parent)| {
                let mut pre: Vec<Preimage> = Vec::with_capacity(system.branch_factor() as usize);
                let dropped = system.preimages_into(parent.point, &mut pre);
                let children = pre
                    .into_iter()
                    .map(|p| TreeNode {
                        point: p.point,
                        parent: pi as u32,
                        branch: p.branch,
                        multiplicity: p.multiplicity,
                        back_log_jac: parent.back_log_jac + system.log_jac_unchecked(p.point),
                    })
                    .collect();
                (children, dropped)
            })
            .collect();
        let count: usize = expanded.iter().map(|(c, _)| c.len()).sum();
        total += count;
        if total > node_cap {
            return Err(Error::TreeTruncated {
                completed_level: level - 1,
                failed_level: level,
                cap: node_cap,
            });
        }
        if count == 0 {
            break;
        }
        let mut nodes = Vec::with_capacity(count);
        let mut dropped_total = 0u64;
        for (children, dropped) in expanded {
            nodes.extend(children);
            dropped_total += dropped as u64;
        }
        levels.push(nodes);
        discarded.push(dropped_total);
    }
    let level_minima = levels
        .iter()
        .map(|lvl| lvl.iter().map(|n| n.back_log_jac).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(PreimageTree {
        root: x,
        levels,
        level_minima,
        discarded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPoint {
    pub n: usize,
    pub node_count: usize,
    /// `log σ̂_n`, the smallest backward log-Jacobian on level `n`.
    pub sigma_log: f64,
    pub argmin_branch: String,
}

/// Level minima with their minimising branch, up to the last non-empty level.
pub fn sigma_profile(tree: &PreimageTree) -> Vec<SigmaPoint> {
    tree.levels
        .iter()
        .enumerate()
        .map(|(n, level)| {
            let (idx, _) = level
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |(bi, bv), (i, node)| {
                    if node.back_log_jac < bv {
                        (i, node.back_log_jac)
                    } else {
                        (bi, bv)
                    }
                });
            SigmaPoint {
                n,
                node_count: level.len(),
                sigma_log: tree.level_minima[n],
                argmin_branch: tree.path(n, idx),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitWindow {
    pub start: usize,
    pub end: usize,
}

impl FitWindow {
    /// `[4, n_max]`.
    pub fn default_for(n_max: usize) -> Self {
        Self { start: 4, end: n_max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackwardFit {
    pub family: RateFamily,
    /// `min_n (log σ̂_n − log b_n)` over the window.
    pub log_cx: f64,
    /// Slope of `log σ̂_n` against the family's growth variable.
    pub beta_hat: f64,
    /// `min_n (log σ̂_n − β̂ g(n))`: the constant for the fitted rate itself.
    pub log_cx_fitted_rate: f64,
    pub fit_quality: f64,
    pub reliable: bool,
    pub window: FitWindow,
    pub n_hat: Option<usize>,
    /// `K^{−N̂}`.
    pub c_from_n: Option<f64>,
}

impl BackwardFit {
    pub fn attach_n_hat(&mut self, n_hat: usize, system: &MapSystem) {
        self.n_hat = Some(n_hat);
        self.c_from_n = Some(cx_from_n(n_hat, system));
    }

    /// Whether `log σ̂_n ≥ log C_x + log b_n` on every window level.
    pub fn bound_holds(&self, profile: &[SigmaPoint], b: &RateSequence) -> bool {
        window_levels(profile, self.window).all(|p| p.sigma_log >= self.log_cx + b.log_at(p.n))
    }
}

fn window_levels(profile: &[SigmaPoint], window: FitWindow) -> impl Iterator<Item = &SigmaPoint> {
    profile
        .iter()
        .filter(move |p| p.n >= window.start && p.n <= window.end && p.sigma_log.is_finite())
}

/// Worst-case constant and growth slope of the backward profile.
///
/// `log C_x` is the minimum residual `log σ̂_n − log b_n` over the window, so
/// the bound holds at every fitted level rather than on average.
pub fn fit_backward(profile: &[SigmaPoint], b: &RateSequence, window: FitWindow) -> Result<BackwardFit> {
    let pts: Vec<&SigmaPoint> = window_levels(profile, window).collect();
    if pts.len() < MIN_FIT_LEVELS {
        return Err(Error::Config(format!(
            "fit window [{}, {}] holds {} usable levels, need {MIN_FIT_LEVELS}",
            window.start,
            window.end,
            pts.len()
        )));
    }
    let log_cx = pts
        .iter()
        .map(|p| p.sigma_log - b.log_at(p.n))
        .fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = pts.iter().map(|p| b.growth_variable(p.n)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.sigma_log).collect();
    let line = fit_line(&xs, &ys).ok_or_else(|| Error::Config("degenerate fit window".into()))?;
    let log_cx_fitted_rate = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - line.slope * x)
        .fold(f64::INFINITY, f64::min);
    Ok(BackwardFit {
        family: b.family.clone(),
        log_cx,
        beta_hat: line.slope,
        log_cx_fitted_rate,
        fit_quality: line.r2,
        reliable: line.r2 >= MIN_FIT_QUALITY,
        window: FitWindow {
            start: pts[0].n,
            end: pts[pts.len() - 1].n,
        },
        n_hat: None,
        c_from_n: None,
    })
}

/// `C_x = K^{−N} = exp(−N log K)`.
pub fn cx_from_n(n: usize, system: &MapSystem) -> f64 {
    (-(n as f64) * system.sup_log_jac()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef {
    pub level: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    /// `max(0, max_y (u(y) − level(y)))` over non-censored nodes.
    pub n_hat: usize,
    pub nodes_checked: u64,
    /// Nodes whose first entry is censored at the horizon.
    pub censored: Vec<NodeRef>,
    /// Nodes whose greedy gluing ran into a censored ancestor.
    pub glue_failures: Vec<NodeRef>,
    /// Nodes not found in `U_n ∪ … ∪ U_{n+N̂}` by the direct predicate.
    pub inclusion_failures: Vec<NodeRef>,
    /// Nodes violating `log|det Df^n(y)| ≥ log b_n − N̂ log K`.
    pub display_failures: Vec<NodeRef>,
}

impl Lemma2Report {
    pub fn censored_fraction(&self) -> f64 {
        if self.nodes_checked == 0 {
            0.0
        } else {
            self.censored.len() as f64 / self.nodes_checked as f64
        }
    }

    pub fn is_clean(&self) -> bool {
        self.glue_failures.is_empty() && self.inclusion_failures.is_empty() && self.display_failures.is_empty()
    }
}

enum NodeOutcome {
    Ok,
    Glue,
    Inclusion,
    Display,
}

/// Checks `f^{−n}(x) ⊂ U_n ∪ … ∪ U_{n+N̂}` on every tree node.
///
/// First-entry times are computed for every node; each node is then glued
/// along its ancestors and the glued total `m` is re-verified with the
/// direct membership predicate. The same `m` gives the node-level bound
/// `log|det Df^n(y)| ≥ log b_m − (m − n) log K ≥ log b_n − N̂ log K`.
pub fn lemma2_inclusion(
    system: &MapSystem,
    tree: &PreimageTree,
    b: &RateSequence,
    horizon: usize,
) -> Result<Lemma2Report> {
    b.require_certified()?;
    check_horizon(horizon)?;
    b.ensure_covers(horizon)?;
    let depth = tree.depth();
    let u_values: Vec<Vec<Option<usize>>> = tree
        .levels
        .iter()
        .enumerate()
        .map(|(level, nodes)| {
            if level == 0 {
                return vec![None];
            }
            nodes
                .par_iter()
                .map(|node| first_entry_value(system, node.point, b, horizon))
                .collect()
        })
        .collect();

    let mut censored = Vec::new();
    let mut excess = 0i64;
    for (level, values) in u_values.iter().enumerate().skip(1) {
        for (index, u) in values.iter().enumerate() {
            match u {
                Some(u) => excess = excess.max(*u as i64 - level as i64),
                None => censored.push(NodeRef { level, index }),
            }
        }
    }
    let n_hat = excess.max(0) as usize;
    let log_k = system.sup_log_jac();

    let mut glue_failures = Vec::new();
    let mut inclusion_failures = Vec::new();
    let mut display_failures = Vec::new();
    let mut nodes_checked = 0u64;
    for level in 1..=depth {
        let outcomes: Vec<NodeOutcome> = (0..tree.levels[level].len())
            .into_par_iter()
            .map(|index| {
                let glued = glue_decomposition(
                    |offset| {
                        let idx = tree.ancestor(level, index, offset);
                        u_values[level - offset][idx]
                    },
                    level,
                );
                let Ok(glued) = glued else {
                    return NodeOutcome::Glue;
                };
                let m = glued.total;
                let node = &tree.levels[level][index];
                let member = m <= level + n_hat && system.cum_log_jac(node.point, m) >= b.log_at(m);
                if !member {
                    return NodeOutcome::Inclusion;
                }
                let lower = b.log_at(m) - (m - level) as f64 * log_k;
                let floor = b.log_at(level) - n_hat as f64 * log_k;
                if node.back_log_jac < lower - DISPLAY_TOLERANCE || lower < floor - DISPLAY_TOLERANCE {
                    return NodeOutcome::Display;
                }
                NodeOutcome::Ok
            })
            .collect();
        nodes_checked += outcomes.len() as u64;
        for (index, outcome) in outcomes.into_iter().enumerate() {
            let r = NodeRef { level, index };
            match outcome {
                NodeOutcome::Ok => {}
                NodeOutcome::Glue => glue_failures.push(r),
                NodeOutcome::Inclusion => inclusion_failures.push(r),
                NodeOutcome::Display => display_failures.push(r),
            }
        }
    }
    Ok(Lemma2Report {
        n_hat,
        nodes_checked,
        censored,
        glue_failures,
        inclusion_failures,
        display_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::RateFamily;

    fn exp_rate(c: f64) -> RateSequence {
        RateSequence::new(RateFamily::Exp { c }).unwrap()
    }

    #[test]
    fn doubling_tree() {
        let dbl = MapSystem::doubling(2).unwrap();
        let t = build_tree(&dbl, Point::Circle(0.3), 4, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(t.node_counts(), vec![1, 2, 4, 8, 16]);
        for (n, level) in t.levels.iter().enumerate() {
            for node in level {
                assert!((node.back_log_jac - n as f64 * 2f64.ln()).abs() < 1e-12);
            }
        }
        let prof = sigma_profile(&t);
        assert_eq!(prof[0].argmin_branch, "root");
        assert_eq!(prof[2].argmin_branch, "0.0");
    }

    #[test]
    fn quadratic_first_level() {
        let q = MapSystem::quadratic(2.0).unwrap();
        let t = build_tree(&q, Point::Interval(0.0), 1, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(t.levels[1].len(), 2);
        for node in &t.levels[1] {
            assert!((node.point.coords()[0].abs() - 0.5f64.sqrt()).abs() < 1e-15);
            // log(4 · sqrt(1/2)) = log(2·sqrt 2)
            assert!((node.back_log_jac - 1.039_720_770_839_918).abs() < 1e-12);
        }
    }

    #[test]
    fn node_cap_is_enforced_up_front() {
        let q = MapSystem::quadratic(2.0).unwrap();
        assert!(matches!(
            build_tree(&q, Point::Interval(0.3), 12, 1000),
            Err(Error::TreeTooLarge { estimate: 4096, cap: 1000 })
        ));
    }

    #[test]
    fn truncation_mid_build() {
        // the leaf estimate 3^2 = 9 passes, the 13 total nodes do not
        let dbl = MapSystem::doubling(3).unwrap();
        assert_eq!(
            build_tree(&dbl, Point::Circle(0.1), 2, 9).unwrap_err(),
            Error::TreeTruncated {
                completed_level: 1,
                failed_level: 2,
                cap: 9
            }
        );
        assert_eq!(build_tree(&dbl, Point::Circle(0.1), 2, 13).unwrap().depth(), 2);
    }

    #[test]
    fn viana_tree_drops_outside_branches() {
        let v = MapSystem::viana(crate::dynamics::MISIUREWICZ_A0, 0.05, 2, None).unwrap();
        let t = build_tree(&v, Point::Skew { s: 0.2, x: 0.1 }, 6, DEFAULT_NODE_CAP).unwrap();
        for (level, nodes) in t.levels.iter().enumerate().skip(1) {
            assert_eq!(nodes.len() as u64 + t.discarded[level], 4 * t.levels[level - 1].len() as u64);
            for node in nodes {
                let parent = t.levels[level - 1][node.parent as usize].point;
                assert!(v.evaluate(node.point).unwrap().distance(&parent) < 1e-9);
            }
        }
    }

    #[test]
    fn fit_examples() {
        let dbl = MapSystem::doubling(2).unwrap();
        let t = build_tree(&dbl, Point::Circle(0.3), 12, DEFAULT_NODE_CAP).unwrap();
        let prof = sigma_profile(&t);
        let f = fit_backward(&prof, &exp_rate(0.5), FitWindow::default_for(12)).unwrap();
        assert!((f.beta_hat - 2f64.ln()).abs() < 1e-9);
        assert!((f.log_cx - 4.0 * (2f64.ln() - 0.5)).abs() < 1e-9);
        assert!(f.reliable);
        assert!(f.bound_holds(&prof, &exp_rate(0.5)));

        let flat: Vec<SigmaPoint> = (0..=10)
            .map(|n| SigmaPoint {
                n,
                node_count: 1,
                sigma_log: 0.0,
                argmin_branch: String::new(),
            })
            .collect();
        let f = fit_backward(&flat, &exp_rate(0.5), FitWindow::default_for(10)).unwrap();
        assert!((f.log_cx + 5.0).abs() < 1e-12);
        assert!(!f.reliable);

        assert!(fit_backward(&flat, &exp_rate(0.5), FitWindow { start: 8, end: 10 }).is_err());
    }

    #[test]
    fn cx_examples() {
        let q = MapSystem::quadratic(2.0).unwrap();
        assert!((cx_from_n(3, &q) - 1.0 / 64.0).abs() < 1e-15);
        assert_eq!(cx_from_n(0, &q), 1.0);
        let dbl = MapSystem::doubling(2).unwrap();
        assert!((cx_from_n(5, &dbl) - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn lemma2_on_doubling() {
        let dbl = MapSystem::doubling(2).unwrap();
        let t = build_tree(&dbl, Point::Circle(0.3), 8, DEFAULT_NODE_CAP).unwrap();
        let r = lemma2_inclusion(&dbl, &t, &exp_rate(0.5), 48).unwrap();
        assert_eq!(r.n_hat, 0);
        assert!(r.censored.is_empty());
        assert!(r.is_clean());
        assert_eq!(r.nodes_checked, 2 + 4 + 8 + 16 + 32 + 64 + 128 + 256);
    }

    #[test]
    fn lemma2_reports_censored_nodes() {
        // x = 1 has the critical point 0 as its only pre-image
        let q = MapSystem::quadratic(2.0).unwrap();
        let t = build_tree(&q, Point::Interval(1.0), 3, DEFAULT_NODE_CAP).unwrap();
        let r = lemma2_inclusion(&q, &t, &exp_rate(0.2), 30).unwrap();
        assert!(r.censored.contains(&NodeRef { level: 1, index: 0 }));
        assert!(!r.glue_failures.is_empty());
    }
}
