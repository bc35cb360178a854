//! Numerical toolkit for explosive age-dependent branching processes.
//!
//! A population starts from a single ancestor born at time 0. Every individual
//! reproduces according to an i.i.d. copy of a point process on `[0, ∞)`:
//! children of `u` are born at `S(u) + X_{u,j}`, where `S(u)` is the parent's
//! birth time and the offsets `X_{u,j}` (possibly including a batch at offset
//! zero) are the atoms of the reproduction point process. The crate provides
//!
//! * parametric intensity models `μ₊(t)` with generalized inverses
//!   ([`intensity`]),
//! * reproduction laws and exact point-process samplers, including a shared
//!   unit-rate coupling for stochastically ordered intensities
//!   ([`reproduction`]),
//! * generation-by-generation genealogy simulation with deterministic keyed
//!   random streams, explosion proxies, varying-environment counts and total
//!   progeny ([`genealogy`]),
//! * the smoothing transform acting on survival profiles, its Poisson closed
//!   form, Monte-Carlo estimator and fixed-point iteration ([`smoothing`]),
//! * analytic explosion criteria (integral test, ratio test, product-series
//!   tests, varying-environment survival, heavy-tail characterization,
//!   distribution envelopes) returning structured reports ([`criteria`]).
//!
//! All randomness flows through [`rng::RngStream`], a counter-based splittable
//! generator: results are reproducible bit-for-bit from a single seed and do
//! not depend on thread count.

pub mod criteria;
pub mod genealogy;
pub mod intensity;
pub mod reproduction;
pub mod rng;
pub mod smoothing;

pub use criteria::{CriterionReport, Verdict};
pub use intensity::{AssumptionReport, IntensityError, IntensityFamily, IntensityModel};
pub use reproduction::{DisplacementLaw, OffspringLaw, PointSample, ReproductionLaw};
pub use rng::RngStream;
pub use smoothing::{IterationResult, Profile, TrivialityVerdict};
