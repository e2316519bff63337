//! Shared fixtures for the criterion benches.

use volcon_core::{MapSystem, Point, RateFamily, RateSequence};

pub fn quadratic() -> MapSystem {
    MapSystem::quadratic(2.0).expect("a = 2 is a valid parameter")
}

pub fn viana() -> MapSystem {
    MapSystem::viana(volcon_core::dynamics::MISIUREWICZ_A0, 0.05, 2, None).expect("default Viana parameters")
}

pub fn exp_rate(c: f64) -> RateSequence {
    RateSequence::new(RateFamily::Exp { c }).expect("positive constant")
}

pub fn quadratic_root() -> Point {
    Point::Interval(0.3)
}
