//! Numerical laboratory for backward volume contraction on pre-orbits of
//! non-uniformly expanding maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`] defines the concrete map systems (doubling, quadratic and
//!   Viana skew products) with log-Jacobians and inverse branches.
//! * [`profile`] measures expansion hitting times and their tail sets.
//! * [`rates`] builds threshold and backward rate sequences and checks the
//!   hypotheses tying them to the tail profile.
//! * [`chains`] implements first-entry times, chains, the concatenation
//!   property, greedy chain gluing and the tower-mass series.
//! * [`backward`] enumerates pre-image trees and verifies the backward
//!   contraction bound node by node.

pub mod backward;
pub mod chains;
pub mod dynamics;
pub mod error;
pub mod profile;
pub mod rates;
pub mod sampling;
pub mod series;

mod regression;

pub use backward::{
    build_tree, cx_from_n, fit_backward, lemma2_inclusion, sigma_profile, BackwardFit, NodeRef,
    FitWindow, Lemma2Report, PreimageTree, SigmaPoint,
};
pub use chains::{
    concatenation_check, first_entry, first_entry_profile, glue_decomposition, membership_u,
    tower_mass, ChainDecomposition, ChainState, ConcatenationReport, TowerMassReport, Violation,
};
pub use dynamics::{MapSystem, OrbitRecord, Point, SystemKind, NEGATIVE_DEGENERATE};
pub use error::{Error, Result};
pub use profile::{
    classify_tail, estimate_tails, hitting_time, lp_diagnostic, HitTime, HittingResult, LpReport, Regime,
    TailClass, TailProfile,
};
pub use rates::{derive_b, gamma_bound, theorem_series, DeriveOptions, DerivedRate, RateFamily, RateSequence};
pub use series::{SeriesReport, Verdict};
