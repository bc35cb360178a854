//! Offspring counts, displacements, and reproduction point processes.
//!
//! A reproduction law describes the random point configuration ξ of child
//! birth offsets for one individual. Four shapes are supported: a Poisson
//! point process driven by an [`IntensityModel`] (atom at 0 plus positive
//! part), the Bellman-Harris configuration `Z·δ_W` (a random count at one
//! common delay), the instant-plus-delay configuration `Y·δ_0 + δ_W`, and
//! i.i.d. displacements `Σ_{j≤Z} δ_{W_j}`.
//!
//! Poisson configurations are sampled by inversion: a unit-rate arrival
//! stream `L_1 < L_2 < …` is mapped through the cumulative mass, so level
//! `L ≤ atom` yields a point at 0 and level `atom < L ≤ atom + μ₊(h)` yields
//! a point at `μ₊⁻¹(L − atom)`. Feeding two models the same arrival stream
//! realizes the monotone coupling: pointwise-ordered cumulative masses give
//! pathwise-ordered cumulative counts.

use crate::intensity::{IntensityError, IntensityModel};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReproductionError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReproductionError {
    #[error("invalid reproduction parameter: {0}")]
    InvalidParameter(String),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("instantaneous explosion regime: mean instantaneous offspring {mean:?} exceeds 1")]
    InstantaneousExplosion { mean: Option<f64> },
    #[error(transparent)]
    Intensity(#[from] IntensityError),
}

/// Distribution of a non-negative integer offspring count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum OffspringLaw {
    Deterministic { k: u64 },
    Poisson { mean: f64 },
    /// Number of failures before the first success: `P(Z = k) = p(1-p)^k`.
    Geometric { p: f64 },
    /// Integerized power tail `P(Z > n) = min(1, (max(n,1)/x_min)^{-alpha})`
    /// with `alpha` in (0,1); the mean is infinite and reported as `None`.
    ParetoTail { alpha: f64, x_min: f64 },
}

impl OffspringLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ReproductionError::InvalidParameter(msg));
        match self {
            OffspringLaw::Deterministic { .. } => Ok(()),
            OffspringLaw::Poisson { mean } => {
                if !(mean.is_finite() && *mean >= 0.0) {
                    return bad(format!("poisson mean must be non-negative, got {mean}"));
                }
                Ok(())
            }
            OffspringLaw::Geometric { p } => {
                if !(p.is_finite() && *p > 0.0 && *p < 1.0) {
                    return bad(format!("geometric p must lie in (0, 1), got {p}"));
                }
                Ok(())
            }
            OffspringLaw::ParetoTail { alpha, x_min } => {
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < 1.0) {
                    return bad(format!("pareto tail exponent must lie in (0, 1), got {alpha}"));
                }
                if !(x_min.is_finite() && *x_min > 0.0) {
                    return bad(format!("pareto x_min must be positive, got {x_min}"));
                }
                Ok(())
            }
        }
    }

    /// `E[Z]`; `None` when infinite.
    pub fn mean(&self) -> Option<f64> {
        match self {
            OffspringLaw::Deterministic { k } => Some(*k as f64),
            OffspringLaw::Poisson { mean } => Some(*mean),
            OffspringLaw::Geometric { p } => Some((1.0 - p) / p),
            OffspringLaw::ParetoTail { .. } => None,
        }
    }

    /// `E[Z(Z-1)]`; `None` when infinite.
    pub fn second_factorial_moment(&self) -> Option<f64> {
        match self {
            OffspringLaw::Deterministic { k } => Some((*k as f64) * (*k as f64 - 1.0)),
            OffspringLaw::Poisson { mean } => Some(mean * mean),
            OffspringLaw::Geometric { p } => {
                let q = 1.0 - p;
                Some(2.0 * q * q / (p * p))
            }
            OffspringLaw::ParetoTail { .. } => None,
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match self {
            OffspringLaw::Deterministic { k: v } => {
                if k == *v {
                    1.0
                } else {
                    0.0
                }
            }
            OffspringLaw::Poisson { mean } => {
                if *mean == 0.0 {
                    return if k == 0 { 1.0 } else { 0.0 };
                }
                // recurrence p_k = p_{k-1}·λ/k keeps full precision for the
                // desk-scale k this crate convolves
                let mut p = (-mean).exp();
                for j in 1..=k {
                    p *= mean / j as f64;
                }
                p
            }
            OffspringLaw::Geometric { p } => p * (1.0 - p).powi(k as i32),
            OffspringLaw::ParetoTail { .. } => {
                let upper = if k == 0 { 1.0 } else { self.survival(k as f64 - 1.0) };
                upper - self.survival(k as f64)
            }
        }
    }

    /// `P(Z > t)` for real `t ≥ 0` (right tail of the integer law).
    pub fn survival(&self, t: f64) -> f64 {
        let n = t.max(0.0).floor();
        match self {
            OffspringLaw::Deterministic { k } => {
                if (*k as f64) > n {
                    1.0
                } else {
                    0.0
                }
            }
            OffspringLaw::Poisson { mean } => {
                if *mean == 0.0 {
                    return 0.0;
                }
                // sum the tail upward; terms decay at ratio mean/k
                let mut k = n + 1.0;
                let mut term = (-mean + k * mean.ln() - ln_factorial(k)).exp();
                let mut total = 0.0;
                for _ in 0..400 {
                    total += term;
                    k += 1.0;
                    term *= mean / k;
                    if term < total * 1e-17 + 1e-320 {
                        break;
                    }
                }
                total.min(1.0)
            }
            OffspringLaw::Geometric { p } => (1.0 - p).powf(n + 1.0),
            OffspringLaw::ParetoTail { alpha, x_min } => {
                (n.max(1.0) / x_min).powf(-alpha).min(1.0)
            }
        }
    }

    pub fn prob_zero(&self) -> f64 {
        self.pmf(0)
    }

    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        match self {
            OffspringLaw::Deterministic { k } => *k,
            OffspringLaw::Poisson { mean } => sample_poisson(*mean, rng),
            OffspringLaw::Geometric { p } => {
                let u = rng.next_open01();
                (u.ln() / (1.0 - p).ln()).floor() as u64
            }
            OffspringLaw::ParetoTail { alpha, x_min } => {
                // inverse transform on the integerized tail
                let v = rng.next_open01();
                let r = x_min * v.powf(-1.0 / alpha);
                if r <= 1.0 {
                    0
                } else if r >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    r.ceil() as u64
                }
            }
        }
    }
}

/// `ln(k!)` for `k ≥ 0` given as a float; Stirling beyond 20.
fn ln_factorial(k: f64) -> f64 {
    if k < 20.5 {
        let mut acc = 0.0;
        let mut j = 2.0;
        while j <= k {
            acc += j.ln();
            j += 1.0;
        }
        acc
    } else {
        let x = k + 1.0;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
    }
}

fn sample_poisson(mean: f64, rng: &mut RngStream) -> u64 {
    // product-of-uniforms in chunks; e^{-20} is far from underflow
    let mut remaining = mean;
    let mut total = 0u64;
    while remaining > 20.0 {
        total += poisson_chunk(20.0, rng);
        remaining -= 20.0;
    }
    total + poisson_chunk(remaining, rng)
}

fn poisson_chunk(lambda: f64, rng: &mut RngStream) -> u64 {
    let floor = (-lambda).exp();
    let mut k = 0u64;
    let mut prod = 1.0;
    loop {
        prod *= rng.next_open01();
        if prod < floor {
            return k;
        }
        k += 1;
    }
}

/// Distribution of a positive real birth displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DisplacementLaw {
    Uniform { b: f64 },
    Exponential { rate: f64 },
    Deterministic { w: f64 },
    /// Quantile envelope `F_W⁻¹(y) = μ₊⁻¹((c·y)^{1/q})` read off an intensity
    /// model; used to route moment bounds into the heavy-tail machinery.
    InverseFromIntensity {
        model: IntensityModel,
        c: f64,
        q: f64,
    },
}

impl DisplacementLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ReproductionError::InvalidParameter(msg));
        match self {
            DisplacementLaw::Uniform { b } => {
                if !(b.is_finite() && *b > 0.0) {
                    return bad(format!("uniform upper bound must be positive, got {b}"));
                }
            }
            DisplacementLaw::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            DisplacementLaw::Deterministic { w } => {
                if !(w.is_finite() && *w > 0.0) {
                    return bad(format!("deterministic displacement must be positive, got {w}"));
                }
            }
            DisplacementLaw::InverseFromIntensity { model, c, q } => {
                model.validate()?;
                if !(c.is_finite() && *c > 0.0) {
                    return bad(format!("envelope constant c must be positive, got {c}"));
                }
                if !(q.is_finite() && *q >= 1.0) {
                    return bad(format!("envelope exponent q must be at least 1, got {q}"));
                }
            }
        }
        Ok(())
    }

    /// Quantile `F_W⁻¹(y)` for `y ∈ [0, 1)`.
    pub fn quantile(&self, y: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&y) {
            return Err(ReproductionError::InvalidParameter(format!(
                "quantile argument must lie in [0, 1), got {y}"
            )));
        }
        Ok(match self {
            DisplacementLaw::Uniform { b } => b * y,
            DisplacementLaw::Exponential { rate } => -(-y).ln_1p() / rate,
            DisplacementLaw::Deterministic { w } => *w,
            DisplacementLaw::InverseFromIntensity { model, c, q } => {
                model.inverse((c * y).powf(1.0 / q))?
            }
        })
    }

    /// `F_W⁻¹(e^{-u})`, stable for `u` beyond the underflow point of `e^{-u}`.
    pub fn quantile_log_level(&self, u: f64) -> Result<f64> {
        if !(u.is_finite() && u >= 0.0) {
            return Err(ReproductionError::InvalidParameter(format!(
                "log level must be non-negative, got {u}"
            )));
        }
        Ok(match self {
            DisplacementLaw::Uniform { b } => b * (-u).exp(),
            DisplacementLaw::Exponential { rate } => -(-(-u).exp()).ln_1p() / rate,
            DisplacementLaw::Deterministic { w } => *w,
            DisplacementLaw::InverseFromIntensity { model, c, q } => {
                model.inverse_log_level((u - c.ln()) / q)?
            }
        })
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        self.quantile(rng.next_open01())
    }
}

/// Law of the reproduction point configuration ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReproductionLaw {
    /// Poisson point process with the given mean measure.
    PoissonPp { model: IntensityModel },
    /// `ξ = Z·δ_W`: `Z` children at one common delay `W`.
    BellmanHarris { z: OffspringLaw, w: DisplacementLaw },
    /// `ξ = Y·δ_0 + δ_W`: `Y` instant children plus one delayed child.
    InstantPlusDelay { y: OffspringLaw, w: DisplacementLaw },
    /// `ξ = Σ_{j=1}^Z δ_{W_j}` with i.i.d. displacements.
    IidDisplacements { z: OffspringLaw, w: DisplacementLaw },
}

impl ReproductionLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ReproductionLaw::PoissonPp { model } => Ok(model.validate()?),
            ReproductionLaw::BellmanHarris { z, w }
            | ReproductionLaw::IidDisplacements { z, w } => {
                z.validate()?;
                w.validate()
            }
            ReproductionLaw::InstantPlusDelay { y, w } => {
                y.validate()?;
                w.validate()
            }
        }
    }

    /// Law of the number of points at exactly 0 (instantaneous children).
    pub fn instantaneous_law(&self) -> OffspringLaw {
        match self {
            ReproductionLaw::PoissonPp { model } => OffspringLaw::Poisson {
                mean: model.atom_mass,
            },
            ReproductionLaw::InstantPlusDelay { y, .. } => y.clone(),
            _ => OffspringLaw::Deterministic { k: 0 },
        }
    }
}

/// One realization of ξ restricted to `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    /// Points at exactly 0.
    pub zero_count: u64,
    /// Points in `(0, horizon]`, ascending.
    pub positive_times: Vec<f64>,
    /// The law could have produced points beyond the horizon (always set for
    /// Poisson configurations, which restrict an unbounded process).
    pub truncated: bool,
}

impl PointSample {
    pub fn total(&self) -> u64 {
        self.zero_count + self.positive_times.len() as u64
    }
}

/// Samples ξ on `[0, horizon]`.
pub fn sample(law: &ReproductionLaw, horizon: f64, rng: &mut RngStream) -> Result<PointSample> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ReproductionError::BadHorizon(horizon));
    }
    sample_within(law, horizon, rng)
}

/// As [`sample`] but permits a zero-width window (only the atom can fire);
/// genealogy simulation hits this at individuals born exactly at the horizon.
pub(crate) fn sample_within(
    law: &ReproductionLaw,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<PointSample> {
    match law {
        ReproductionLaw::PoissonPp { model } => read_poisson(model, horizon, rng),
        ReproductionLaw::BellmanHarris { z, w } => {
            let count = z.sample(rng);
            let delay = w.sample(rng)?;
            if count == 0 {
                return Ok(PointSample {
                    zero_count: 0,
                    positive_times: Vec::new(),
                    truncated: false,
                });
            }
            if delay <= horizon {
                Ok(PointSample {
                    zero_count: 0,
                    positive_times: vec![delay; count as usize],
                    truncated: false,
                })
            } else {
                Ok(PointSample {
                    zero_count: 0,
                    positive_times: Vec::new(),
                    truncated: true,
                })
            }
        }
        ReproductionLaw::InstantPlusDelay { y, w } => {
            let zero_count = y.sample(rng);
            let delay = w.sample(rng)?;
            let (positive_times, truncated) = if delay <= horizon {
                (vec![delay], false)
            } else {
                (Vec::new(), true)
            };
            Ok(PointSample {
                zero_count,
                positive_times,
                truncated,
            })
        }
        ReproductionLaw::IidDisplacements { z, w } => {
            let count = z.sample(rng);
            let mut times = Vec::new();
            let mut truncated = false;
            for _ in 0..count {
                let delay = w.sample(rng)?;
                if delay <= horizon {
                    times.push(delay);
                } else {
                    truncated = true;
                }
            }
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(PointSample {
                zero_count: 0,
                positive_times: times,
                truncated,
            })
        }
    }
}

/// Inversion sampler: arrival levels below `atom_mass` are points at 0;
/// levels in `(atom, atom + μ₊(h)]` map through the generalized inverse.
fn read_poisson(model: &IntensityModel, horizon: f64, rng: &mut RngStream) -> Result<PointSample> {
    let positive_budget = if horizon > 0.0 {
        model.positive_mass(horizon)?
    } else {
        0.0
    };
    let budget = model.atom_mass + positive_budget;
    let mut zero_count = 0u64;
    let mut positive_times = Vec::new();
    let mut level = rng.next_exp();
    while level <= budget {
        if level <= model.atom_mass {
            zero_count += 1;
        } else {
            let t = model.inverse(level - model.atom_mass)?.min(horizon);
            positive_times.push(t);
        }
        level += rng.next_exp();
    }
    Ok(PointSample {
        zero_count,
        positive_times,
        truncated: true,
    })
}

/// Samples two Poisson configurations from one shared arrival stream.
///
/// Both marginals are exact; when the cumulative masses are pointwise ordered
/// on `[0, horizon]`, the two cumulative counting functions are ordered
/// pathwise, realization by realization.
pub fn sample_coupled_poisson(
    first: &IntensityModel,
    second: &IntensityModel,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<(PointSample, PointSample)> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ReproductionError::BadHorizon(horizon));
    }
    let budget_a = first.atom_mass + first.positive_mass(horizon)?;
    let budget_b = second.atom_mass + second.positive_mass(horizon)?;
    let mut a = PointSample {
        zero_count: 0,
        positive_times: Vec::new(),
        truncated: true,
    };
    let mut b = a.clone();
    let mut level = rng.next_exp();
    while level <= budget_a.max(budget_b) {
        if level <= budget_a {
            if level <= first.atom_mass {
                a.zero_count += 1;
            } else {
                a.positive_times
                    .push(first.inverse(level - first.atom_mass)?.min(horizon));
            }
        }
        if level <= budget_b {
            if level <= second.atom_mass {
                b.zero_count += 1;
            } else {
                b.positive_times
                    .push(second.inverse(level - second.atom_mass)?.min(horizon));
            }
        }
        level += rng.next_exp();
    }
    Ok((a, b))
}

/// Result of collapsing the instantaneous cluster of a reproduction law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BramsonSample {
    /// Superposed positive parts of the whole cluster; `zero_count = 0`.
    pub points: PointSample,
    /// Individuals in the instantaneous cluster (the ancestor included).
    pub cluster_size: u64,
    /// Cluster generation stopped at `cluster_cap`.
    pub cap_hit: bool,
}

/// Collapses instantly born individuals: samples the total progeny of the
/// Galton-Watson tree generated by points at 0 and superposes the positive
/// parts contributed by every cluster member.
///
/// Requires a non-supercritical instantaneous part (`mean ≤ 1`); an infinite
/// or supercritical instantaneous mean is the explosion regime of the atom
/// alone and is rejected.
pub fn bramson_reduce(
    law: &ReproductionLaw,
    horizon: f64,
    cluster_cap: u64,
    rng: &mut RngStream,
) -> Result<BramsonSample> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(ReproductionError::BadHorizon(horizon));
    }
    if cluster_cap == 0 {
        return Err(ReproductionError::InvalidParameter(
            "cluster_cap must be at least 1".into(),
        ));
    }
    let instant_mean = law.instantaneous_law().mean();
    match instant_mean {
        Some(m) if m <= 1.0 + 1e-12 => {}
        _ => {
            return Err(ReproductionError::InstantaneousExplosion { mean: instant_mean });
        }
    }

    let salt = rng.next_u64();
    let base = rng.child(salt);
    let mut pending = 1u64;
    let mut cluster_size = 0u64;
    let mut cap_hit = false;
    let mut positive_times = Vec::new();
    let mut truncated = false;
    while pending > 0 {
        if cluster_size == cluster_cap {
            cap_hit = true;
            break;
        }
        cluster_size += 1;
        pending -= 1;
        let mut stream = base.child(cluster_size);
        let s = sample_within(law, horizon, &mut stream)?;
        pending += s.zero_count;
        truncated |= s.truncated;
        positive_times.extend_from_slice(&s.positive_times);
    }
    positive_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BramsonSample {
        points: PointSample {
            zero_count: 0,
            positive_times,
            truncated,
        },
        cluster_size,
        cap_hit,
    })
}
