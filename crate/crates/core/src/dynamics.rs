//! Concrete map systems: the linear circle expander `s ↦ ds`, the quadratic
//! family `x ↦ 1 − a x²` on `[−1, 1]`, and the Viana skew product
//! `(s, x) ↦ (ds, a₀ + α sin(2πs) − x²)` on `S¹ × I`.
//!
//! Jacobians are handled in log space throughout; `|det Df^n|` overflows
//! doubles long before the horizons used here. A factor below
//! [`DEGENERACY_FLOOR`] yields [`NEGATIVE_DEGENERATE`], which poisons every
//! subsequent partial sum to `−∞` so downstream comparisons fail closed.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest `|det Df|` treated as non-degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-300;

/// Log-Jacobian returned at (numerically) critical points.
pub const NEGATIVE_DEGENERATE: f64 = f64::NEG_INFINITY;

/// Orbit horizon limit shared by every forward-iteration routine.
pub const MAX_ORBIT_HORIZON: usize = 1 << 20;

/// Critical parameter of `x ↦ a − x²` for which the critical orbit lands on
/// the fixed point after three steps (real root of `c³ + 2c² + 2c + 2`).
pub const MISIUREWICZ_A0: f64 = 1.543_689_012_692_076_4;

const INVARIANCE_GRID: usize = 257;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    Doubling {
        d: u32,
    },
    Quadratic {
        a: f64,
    },
    Viana {
        a0: f64,
        alpha: f64,
        d: u32,
        /// Fibre interval `I`; `None` picks a forward-invariant default.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interval: Option<(f64, f64)>,
    },
}

/// A point of a system's phase space. Circle coordinates live in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Circle(f64),
    Interval(f64),
    Skew { s: f64, x: f64 },
}

impl Point {
    pub fn coords(&self) -> Vec<f64> {
        match *self {
            Point::Circle(s) => vec![s],
            Point::Interval(x) => vec![x],
            Point::Skew { s, x } => vec![s, x],
        }
    }

    /// Distance with circle coordinates measured along `ℝ/ℤ`, sup-norm on pairs.
    pub fn distance(&self, other: &Point) -> f64 {
        match (*self, *other) {
            (Point::Circle(a), Point::Circle(b)) => circle_dist(a, b),
            (Point::Interval(a), Point::Interval(b)) => (a - b).abs(),
            (Point::Skew { s: s1, x: x1 }, Point::Skew { s: s2, x: x2 }) => {
                circle_dist(s1, s2).max((x1 - x2).abs())
            }
            _ => f64::INFINITY,
        }
    }
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

#[inline]
fn reduce(s: f64) -> f64 {
    let r = s.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
fn log_factor(v: f64) -> f64 {
    if v < DEGENERACY_FLOOR {
        NEGATIVE_DEGENERATE
    } else {
        v.ln()
    }
}

/// One inverse branch of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub point: Point,
    /// Position among the point's pre-images, in enumeration order.
    pub branch: u32,
    /// 2 for the double root at a critical value, 1 otherwise.
    pub multiplicity: u8,
}

/// Forward orbit `x, f(x), …, f^n(x)` with cumulative log-Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    pub points: Vec<Point>,
    /// `cum_log_jac[k] = Σ_{i<k} log|det Df(f^i x)|`.
    pub cum_log_jac: Vec<f64>,
    pub degenerate: bool,
}

impl OrbitRecord {
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.points.len() <= 1
    }
}

/// An immutable map system with a cached `log K = log sup|det Df|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSystem {
    kind: SystemKind,
    interval: (f64, f64),
    sup_log_jac: f64,
}

impl MapSystem {
    pub fn new(kind: SystemKind) -> Result<Self> {
        match kind {
            SystemKind::Doubling { d } => Self::doubling(d),
            SystemKind::Quadratic { a } => Self::quadratic(a),
            SystemKind::Viana {
                a0,
                alpha,
                d,
                interval,
            } => Self::viana(a0, alpha, d, interval),
        }
    }

    pub fn doubling(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidSystem(format!("circle degree must be >= 2, got {d}")));
        }
        Ok(Self {
            kind: SystemKind::Doubling { d },
            interval: (0.0, 1.0),
            sup_log_jac: f64::from(d).ln(),
        })
    }

    pub fn quadratic(a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::InvalidSystem(format!("quadratic parameter must lie in (0, 2], got {a}")));
        }
        Ok(Self {
            kind: SystemKind::Quadratic { a },
            interval: (-1.0, 1.0),
            sup_log_jac: (2.0 * a).ln(),
        })
    }

    /// Viana skew product. Without an explicit `interval`, `I = [−r, r]` with
    /// `r` halfway between `max a(s)` and the largest radius keeping
    /// `min a(s) − r² ≥ −r`.
    pub fn viana(a0: f64, alpha: f64, d: u32, interval: Option<(f64, f64)>) -> Result<Self> {
        if !(a0 > 1.0 && a0 < 2.0) {
            return Err(Error::InvalidSystem(format!("a0 must lie in (1, 2), got {a0}")));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidSystem(format!("alpha must be positive, got {alpha}")));
        }
        if d < 2 {
            return Err(Error::InvalidSystem(format!("circle degree must be >= 2, got {d}")));
        }
        let (lo, hi) = match interval {
            Some(iv) => iv,
            None => {
                let a_max = a0 + alpha;
                let a_min = a0 - alpha;
                let r_max = 0.5 + (0.25 + a_min).sqrt();
                let r = 0.5 * (a_max + r_max);
                (-r, r)
            }
        };
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidSystem(format!("degenerate fibre interval [{lo}, {hi}]")));
        }
        let system = Self {
            kind: SystemKind::Viana {
                a0,
                alpha,
                d,
                interval,
            },
            interval: (lo, hi),
            sup_log_jac: (2.0 * f64::from(d) * lo.abs().max(hi.abs())).ln(),
        };
        system.check_viana_invariance()?;
        Ok(system)
    }

    fn check_viana_invariance(&self) -> Result<()> {
        let (lo, hi) = self.interval;
        let mut xs: Vec<f64> = (0..INVARIANCE_GRID)
            .map(|j| lo + (hi - lo) * j as f64 / (INVARIANCE_GRID - 1) as f64)
            .collect();
        if lo < 0.0 && hi > 0.0 {
            xs.push(0.0);
        }
        for i in 0..INVARIANCE_GRID {
            let s = i as f64 / INVARIANCE_GRID as f64;
            for &x in &xs {
                if let Point::Skew { x: image, .. } = self.step(Point::Skew { s, x }) {
                    if !(image > lo && image < hi) {
                        return Err(Error::InvalidSystem(format!(
                            "S1 x [{lo}, {hi}] is not forward invariant: ({s}, {x}) maps to fibre value {image}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    /// `log K` with `K = sup |det Df|` over the domain.
    pub fn sup_log_jac(&self) -> f64 {
        self.sup_log_jac
    }

    /// Fibre interval (the circle is reported as `[0, 1)`).
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Maximum number of pre-images of a single point.
    pub fn branch_factor(&self) -> u32 {
        match self.kind {
            SystemKind::Doubling { d } => d,
            SystemKind::Quadratic { .. } => 2,
            SystemKind::Viana { d, .. } => 2 * d,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        let (lo, hi) = self.interval;
        match (self.kind, *p) {
            (SystemKind::Doubling { .. }, Point::Circle(s)) => (0.0..1.0).contains(&s),
            (SystemKind::Quadratic { .. }, Point::Interval(x)) => (-1.0..=1.0).contains(&x),
            (SystemKind::Viana { .. }, Point::Skew { s, x }) => {
                (0.0..1.0).contains(&s) && x >= lo && x <= hi
            }
            _ => false,
        }
    }

    fn check(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain(p.coords()))
        }
    }

    #[inline]
    fn fibre_param(&self, s: f64) -> f64 {
        match self.kind {
            SystemKind::Viana { a0, alpha, .. } => a0 + alpha * (TAU * s).sin(),
            _ => unreachable!("fibre parameter only exists for skew products"),
        }
    }

    /// `f(p)` without a domain check.
    #[inline]
    pub(crate) fn step(&self, p: Point) -> Point {
        match (self.kind, p) {
            (SystemKind::Doubling { d }, Point::Circle(s)) => Point::Circle(reduce(f64::from(d) * s)),
            (SystemKind::Quadratic { a }, Point::Interval(x)) => {
                let y = 1.0 - a * x * x;
                debug_assert!((-1.0..=1.0).contains(&y), "quadratic orbit left [-1, 1]: {y}");
                Point::Interval(y)
            }
            (SystemKind::Viana { d, .. }, Point::Skew { s, x }) => Point::Skew {
                s: reduce(f64::from(d) * s),
                x: self.fibre_param(s) - x * x,
            },
            (kind, p) => panic!("point {p:?} does not belong to system {kind:?}"),
        }
    }

    #[inline]
    pub(crate) fn log_jac_unchecked(&self, p: Point) -> f64 {
        match (self.kind, p) {
            (SystemKind::Doubling { .. }, _) => self.sup_log_jac,
            (SystemKind::Quadratic { a }, Point::Interval(x)) => log_factor(2.0 * a * x.abs()),
            (SystemKind::Viana { d, .. }, Point::Skew { x, .. }) => {
                log_factor(2.0 * f64::from(d) * x.abs())
            }
            (kind, p) => panic!("point {p:?} does not belong to system {kind:?}"),
        }
    }

    pub fn evaluate(&self, p: Point) -> Result<Point> {
        self.check(&p)?;
        Ok(self.step(p))
    }

    /// `log|det Df(p)|`, or [`NEGATIVE_DEGENERATE`] below the degeneracy floor.
    pub fn log_jacobian(&self, p: Point) -> Result<f64> {
        self.check(&p)?;
        Ok(self.log_jac_unchecked(p))
    }

    pub fn orbit(&self, p: Point, n: usize) -> Result<OrbitRecord> {
        self.check(&p)?;
        if n > MAX_ORBIT_HORIZON {
            return Err(Error::Config(format!(
                "orbit length {n} exceeds limit {MAX_ORBIT_HORIZON}"
            )));
        }
        let mut points = Vec::with_capacity(n + 1);
        let mut cum = Vec::with_capacity(n + 1);
        points.push(p);
        cum.push(0.0);
        let mut degenerate = false;
        for (q, sum) in self.forward(p).take(n) {
            degenerate |= sum == NEGATIVE_DEGENERATE;
            points.push(q);
            cum.push(sum);
        }
        Ok(OrbitRecord {
            points,
            cum_log_jac: cum,
            degenerate,
        })
    }

    /// Unbounded iterator over `(f^k(p), S_k(p))` for `k = 1, 2, …`.
    /// The caller is responsible for `p` lying in the domain.
    pub fn forward(&self, p: Point) -> Forward<'_> {
        Forward {
            system: self,
            point: p,
            sum: 0.0,
        }
    }

    /// `S_n(p) = log|det Df^n(p)|` by direct accumulation.
    pub fn cum_log_jac(&self, p: Point, n: usize) -> f64 {
        self.forward(p).take(n).last().map_or(0.0, |(_, s)| s)
    }

    /// All solutions of `f(q) = p` inside the domain.
    pub fn preimages(&self, p: Point) -> Result<Vec<Preimage>> {
        self.check(&p)?;
        let mut out = Vec::with_capacity(self.branch_factor() as usize);
        self.preimages_into(p, &mut out);
        Ok(out)
    }

    /// Appends the pre-images of `p` to `out` and returns how many candidate
    /// branches were discarded for leaving the domain.
    pub(crate) fn preimages_into(&self, p: Point, out: &mut Vec<Preimage>) -> usize {
        match (self.kind, p) {
            (SystemKind::Doubling { d }, Point::Circle(y)) => {
                let df = f64::from(d);
                out.extend((0..d).map(|k| Preimage {
                    point: Point::Circle(reduce((y + f64::from(k)) / df)),
                    branch: k,
                    multiplicity: 1,
                }));
                0
            }
            (SystemKind::Quadratic { a }, Point::Interval(y)) => {
                let r = (1.0 - y) / a;
                push_square_roots(r, (-1.0, 1.0), 0, out, Point::Interval)
            }
            (SystemKind::Viana { d, .. }, Point::Skew { s: s_img, x: x_img }) => {
                let df = f64::from(d);
                let mut discarded = 0;
                for k in 0..d {
                    let s = reduce((s_img + f64::from(k)) / df);
                    let r = self.fibre_param(s) - x_img;
                    discarded += push_square_roots(r, self.interval, 2 * k, out, |x| Point::Skew { s, x });
                }
                discarded
            }
            (kind, p) => panic!("point {p:?} does not belong to system {kind:?}"),
        }
    }

    /// Draws a point from normalised Lebesgue measure on the domain.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u: f64 = rng.random();
        match self.kind {
            SystemKind::Doubling { .. } => Point::Circle(u),
            SystemKind::Quadratic { .. } => Point::Interval(-1.0 + 2.0 * u),
            SystemKind::Viana { .. } => {
                let v: f64 = rng.random();
                let (lo, hi) = self.interval;
                Point::Skew {
                    s: u,
                    x: lo + (hi - lo) * v,
                }
            }
        }
    }
}

/// Pushes `±sqrt(r)` (those inside `bounds`) with branch ids `base`, `base + 1`.
fn push_square_roots(
    r: f64,
    bounds: (f64, f64),
    base: u32,
    out: &mut Vec<Preimage>,
    make: impl Fn(f64) -> Point,
) -> usize {
    if r < 0.0 {
        return 2;
    }
    let (lo, hi) = bounds;
    if r == 0.0 {
        if lo <= 0.0 && hi >= 0.0 {
            out.push(Preimage {
                point: make(0.0),
                branch: base,
                multiplicity: 2,
            });
            return 0;
        }
        return 2;
    }
    let root = r.sqrt();
    let mut discarded = 0;
    for (offset, x) in [(0, root), (1, -root)] {
        if x >= lo && x <= hi {
            out.push(Preimage {
                point: make(x),
                branch: base + offset,
                multiplicity: 1,
            });
        } else {
            discarded += 1;
        }
    }
    discarded
}

/// Iterator returned by [`MapSystem::forward`].
#[derive(Debug, Clone)]
pub struct Forward<'a> {
    system: &'a MapSystem,
    point: Point,
    sum: f64,
}

impl Iterator for Forward<'_> {
    type Item = (Point, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        self.sum += self.system.log_jac_unchecked(self.point);
        self.point = self.system.step(self.point);
        Some((self.point, self.sum))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad() -> MapSystem {
        MapSystem::quadratic(2.0).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let dbl = MapSystem::doubling(2).unwrap();
        match dbl.evaluate(Point::Circle(0.3)).unwrap() {
            Point::Circle(s) => assert_abs_diff_eq!(s, 0.6, epsilon = 1e-15),
            p => panic!("{p:?}"),
        }
        assert_eq!(quad().evaluate(Point::Interval(0.0)).unwrap(), Point::Interval(1.0));
        let viana = MapSystem::viana(1.8, 0.05, 2, None).unwrap();
        assert_eq!(
            viana.evaluate(Point::Skew { s: 0.0, x: 0.0 }).unwrap(),
            Point::Skew { s: 0.0, x: 1.8 }
        );
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(quad().evaluate(Point::Interval(1.5)), Err(Error::Domain(_))));
        assert!(quad().evaluate(Point::Circle(0.2)).is_err());
        assert!(MapSystem::doubling(2).unwrap().log_jacobian(Point::Circle(1.0)).is_err());
    }

    #[test]
    fn log_jacobian_examples() {
        let dbl = MapSystem::doubling(2).unwrap();
        assert_abs_diff_eq!(dbl.log_jacobian(Point::Circle(0.77)).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(quad().log_jacobian(Point::Interval(0.3)).unwrap(), 1.2f64.ln(), epsilon = 1e-12);
        assert_eq!(quad().log_jacobian(Point::Interval(0.0)).unwrap(), NEGATIVE_DEGENERATE);
        assert_eq!(quad().log_jacobian(Point::Interval(1e-310)).unwrap(), NEGATIVE_DEGENERATE);
    }

    #[test]
    fn orbit_examples() {
        let dbl = MapSystem::doubling(2).unwrap();
        let rec = dbl.orbit(Point::Circle(0.3), 3).unwrap();
        let l2 = 2f64.ln();
        for (k, s) in rec.cum_log_jac.iter().enumerate() {
            assert_abs_diff_eq!(*s, k as f64 * l2, epsilon = 1e-12);
        }

        let rec = quad().orbit(Point::Interval(0.3), 2).unwrap();
        let xs: Vec<f64> = rec.points.iter().map(|p| p.coords()[0]).collect();
        assert_abs_diff_eq!(xs[1], 0.82, epsilon = 1e-12);
        assert_abs_diff_eq!(xs[2], -0.3448, epsilon = 1e-12);
        // mpmath: log(1.2) + log(3.28)
        assert_abs_diff_eq!(rec.cum_log_jac[2], 1.370_164_979_190_007, epsilon = 1e-12);
        assert!(!rec.degenerate);

        let rec = quad().orbit(Point::Interval(0.0), 1).unwrap();
        assert!(rec.degenerate);
        assert_eq!(rec.cum_log_jac[0], 0.0);
    }

    #[test]
    fn preimage_examples() {
        let dbl = MapSystem::doubling(2).unwrap();
        let pre: Vec<Point> = dbl.preimages(Point::Circle(0.5)).unwrap().iter().map(|p| p.point).collect();
        assert_eq!(pre, vec![Point::Circle(0.25), Point::Circle(0.75)]);

        let pre = quad().preimages(Point::Interval(0.0)).unwrap();
        assert_eq!(pre.len(), 2);
        assert_abs_diff_eq!(pre[0].point.coords()[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(pre[1].point.coords()[0], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        let pre = quad().preimages(Point::Interval(1.0)).unwrap();
        assert_eq!(pre.len(), 1);
        assert_eq!(pre[0].point, Point::Interval(0.0));
        assert_eq!(pre[0].multiplicity, 2);
    }

    #[test]
    fn quadratic_below_two_can_lack_preimages() {
        let q = MapSystem::quadratic(1.5).unwrap();
        assert!(q.preimages(Point::Interval(-0.9)).unwrap().is_empty());
    }

    #[test]
    fn viana_construction() {
        let v = MapSystem::viana(MISIUREWICZ_A0, 0.05, 2, None).unwrap();
        let (lo, hi) = v.interval();
        assert!(lo < -1.5 && hi > 1.6);
        assert_abs_diff_eq!(v.sup_log_jac(), (4.0 * hi).ln(), epsilon = 1e-15);
        // fibre interval too small to be invariant
        assert!(MapSystem::viana(1.8, 0.05, 2, Some((-1.0, 1.0))).is_err());
        assert!(MapSystem::viana(2.0, 0.05, 2, None).is_err());
        assert!(MapSystem::viana(1.5, 0.0, 2, None).is_err());
        assert!(MapSystem::viana(1.5, 0.05, 1, None).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(MapSystem::quadratic(0.0).is_err());
        assert!(MapSystem::quadratic(2.1).is_err());
        assert!(MapSystem::doubling(1).is_err());
        let k = SystemKind::Quadratic { a: 2.0 };
        assert_eq!(MapSystem::new(k).unwrap().kind(), k);
    }

    #[test]
    fn viana_preimages_drop_outside_interval() {
        let v = MapSystem::viana(MISIUREWICZ_A0, 0.05, 2, None).unwrap();
        let (_, hi) = v.interval();
        // x' close to the top of I: a(s) - x' < 0 for some circle branch
        let p = Point::Skew { s: 0.75, x: hi - 1e-3 };
        let mut out = Vec::new();
        let discarded = v.preimages_into(p, &mut out);
        assert_eq!(out.len() + discarded, 4);
        for pre in &out {
            assert!(v.evaluate(pre.point).unwrap().distance(&p) < 1e-9);
        }
    }
}
