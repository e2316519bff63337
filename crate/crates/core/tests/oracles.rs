use volcon_core::backward::DEFAULT_NODE_CAP;
use volcon_core::rates::gamma_bound;
use volcon_core::{
    build_tree, classify_tail, derive_b, estimate_tails, first_entry_profile, lp_diagnostic, theorem_series,
    DeriveOptions, MapSystem, Point, RateFamily, RateSequence, Regime, TailProfile, Verdict,
};

/// Level minima by plain recursion over `preimages`, one branch at a time.
fn dfs_minima(sys: &MapSystem, p: Point, level: usize, acc: f64, depth: usize, minima: &mut [f64]) {
    minima[level] = minima[level].min(acc);
    if level == depth {
        return;
    }
    for q in sys.preimages(p).unwrap() {
        let step = sys.log_jacobian(q.point).unwrap();
        dfs_minima(sys, q.point, level + 1, acc + step, depth, minima);
    }
}

#[test]
fn tree_minima_match_depth_first_recomputation() {
    let sys = MapSystem::quadratic(2.0).unwrap();
    for depth in [10, 12] {
        let tree = build_tree(&sys, Point::Interval(0.3), depth, DEFAULT_NODE_CAP).unwrap();
        let mut minima = vec![f64::INFINITY; depth + 1];
        dfs_minima(&sys, Point::Interval(0.3), 0, 0.0, depth, &mut minima);
        assert_eq!(tree.node_counts(), (0..=depth).map(|n| 1usize << n).collect::<Vec<_>>());
        for (n, (a, b)) in tree.level_minima.iter().zip(&minima).enumerate() {
            assert!((a - b).abs() <= 1e-12, "depth {depth} level {n}: {a} vs {b}");
        }
    }
}

fn exp_tail(alpha: f64, h: usize) -> TailProfile {
    TailProfile::from_tail((1..=h).map(|n| (-alpha * n as f64).exp()).collect())
}

#[test]
fn domination_recheck_on_planted_tails() {
    for (alpha, lambda, gamma) in [(0.4, 0.5, 0.5), (0.2, 0.1, 0.3), (1.5, 0.35, 0.5), (0.05, 1.0, 0.9)] {
        let prof = exp_tail(alpha, 80);
        let a = RateSequence::new(RateFamily::Exp { c: lambda }).unwrap();
        let class = classify_tail(&prof);
        let d = derive_b(&a, &prof, &class, DeriveOptions { gamma: Some(gamma), slack: None }).unwrap();
        assert!(d.check_domination(&a, &prof));
        let ok = |n: usize| {
            let cap = (lambda * n as f64).min(-gamma * prof.gamma(n).ln());
            d.b.log_at(n) <= cap + 1e-9
        };
        assert!((d.n0..=80).all(ok), "alpha {alpha}");
        if d.n0 > 1 {
            assert!(!ok(d.n0 - 1));
        }
    }
}

/// For `μ(h = n) ∝ n^{−(p + 1.5)}`, `h ∈ L^p`, and the theorem series with
/// `γ` below `(p − 3)/(p − 1)` must converge as well.
#[test]
fn lp_and_theorem_series_agree() {
    for p in [3.5, 4.0, 5.0, 8.0] {
        let masses: Vec<f64> = (1..=255).map(|n| (n as f64).powf(-(p + 1.5))).collect();
        let prof = TailProfile::from_masses(&masses, 0.0);
        let lp = lp_diagnostic(&prof, p).unwrap();
        assert_eq!(lp.series.verdict, Verdict::Convergent, "p = {p}");
        let gamma = 0.5 * gamma_bound(p).unwrap();
        assert_eq!(theorem_series(&prof, gamma).unwrap().verdict, Verdict::Convergent, "p = {p}");
    }
}

#[test]
fn tails_are_monotone_and_thread_independent() {
    let sys = MapSystem::quadratic(2.0).unwrap();
    let a = RateSequence::new(RateFamily::Exp { c: 0.35 }).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_tails(&sys, &a, 60, 20_000, 3).unwrap())
    };
    let one = run(1);
    assert!(one.gamma_tail.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(one, run(2));
    assert_eq!(one, run(8));
    assert!(matches!(classify_tail(&run(8)).regime, Regime::Exponential { .. } | Regime::Undetermined));
}

#[test]
fn first_entry_profile_on_doubling_is_atomic() {
    let sys = MapSystem::doubling(2).unwrap();
    let b = RateSequence::new(RateFamily::Exp { c: 0.5 }).unwrap();
    let prof = first_entry_profile(&sys, &b, 20, 1000, 1).unwrap();
    assert_eq!(prof.mu(1), 1.0);
    assert_eq!(prof.censored_fraction, 0.0);
}
