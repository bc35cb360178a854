//! Discretized monotone profiles and the smoothing transform.
//!
//! A [`Profile`] is a grid step function standing in for a non-increasing,
//! left-continuous `φ: ℝ → [0,1]` with `φ ≡ 1` on `(−∞, 0]`: value `v_k`
//! rules the cell `(t_{k-1}, t_k]` and `v_K` extends beyond the grid. The
//! transform maps `φ` to `t ↦ E[∏_j φ(t − X_j)]` over the points `X_j` of a
//! reproduction configuration; for a Poisson configuration it collapses to
//! the closed form `exp(−[(1−φ(t))·atom + ∫ (1−φ(t−x)) dμ₊(x)])`, and the
//! Stieltjes integral is a finite sum because the profile is a step function.
//!
//! Iterating from the indicator of `(−∞, 0]` climbs monotonically to the
//! minimal fixed point, the survival function of the explosion time on the
//! chosen grid. Iteration is plain (no acceleration): near-critical fixtures
//! contract like `u ← 1 − e^{-u(1+m)}` with tiny `m` at the smallest grid
//! cell, so the residual decays quadratically in the value, not linearly;
//! budget accordingly.

use crate::genealogy::GenealogyError;
use crate::intensity::{IntensityError, IntensityModel};
use crate::reproduction::{sample_within, ReproductionError, ReproductionLaw};
use crate::rng::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, SmoothingError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profile grids differ")]
    GridMismatch,
    #[error("shift {c} is not aligned with the profile grid")]
    ShiftNotAligned { c: f64 },
    #[error("tolerance {tol} is below the Monte-Carlo noise floor {noise}")]
    ToleranceBelowNoise { tol: f64, noise: f64 },
    #[error("invalid iteration parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Reproduction(#[from] ReproductionError),
    #[error(transparent)]
    Genealogy(#[from] GenealogyError),
}

/// Grid step function in the profile space: non-increasing, `[0,1]`-valued,
/// identically 1 on `(−∞, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(SmoothingError::InvalidProfile("empty grid".into()));
        }
        if grid.len() != values.len() {
            return Err(SmoothingError::InvalidProfile(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        let mut prev_t = 0.0;
        for &t in &grid {
            if !(t.is_finite() && t > prev_t) {
                return Err(SmoothingError::InvalidProfile(format!(
                    "grid must ascend strictly from above 0, got {t} after {prev_t}"
                )));
            }
            prev_t = t;
        }
        let mut prev_v = 1.0f64;
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(SmoothingError::InvalidProfile(format!(
                    "values must lie in [0, 1], got {v}"
                )));
            }
            if v > prev_v {
                return Err(SmoothingError::InvalidProfile(format!(
                    "values must be non-increasing, got {v} after {prev_v}"
                )));
            }
            prev_v = v;
        }
        Ok(Profile { grid, values })
    }

    /// Indicator of `(−∞, 0]`: the smallest profile, seed of the iteration.
    pub fn indicator(grid: Vec<f64>) -> Result<Self> {
        let values = vec![0.0; grid.len()];
        Profile::new(grid, values)
    }

    /// The trivial fixed point `φ ≡ 1`.
    pub fn ones(grid: Vec<f64>) -> Result<Self> {
        let values = vec![1.0; grid.len()];
        Profile::new(grid, values)
    }

    /// Indicator of `(−∞, c]` for a grid-covered cut `c > 0`.
    pub fn indicator_up_to(grid: Vec<f64>, c: f64) -> Result<Self> {
        let values = grid
            .iter()
            .map(|&t| if t <= c { 1.0 } else { 0.0 })
            .collect();
        Profile::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(1.0, f64::min)
    }

    /// Step evaluation: 1 on `(−∞,0]`, `v_k` on `(t_{k-1}, t_k]`, `v_K` beyond.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let i = self.grid.partition_point(|&g| g < t);
        if i == self.grid.len() {
            *self.values.last().unwrap()
        } else {
            self.values[i]
        }
    }

    /// Sup-norm distance on the shared grid.
    pub fn sup_distance(&self, other: &Profile) -> Result<f64> {
        if self.grid != other.grid {
            return Err(SmoothingError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Geometric grid of `n` points on `(lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    crate::intensity::geometric_points(lo, hi, n)
}

/// Uniform grid `hi·k/n` for `k = 1..=n`.
pub fn uniform_grid(hi: f64, n: usize) -> Vec<f64> {
    assert!(hi > 0.0 && n > 0);
    (1..=n).map(|k| hi * k as f64 / n as f64).collect()
}

/// Precomputed discrete transform for one (model, grid) pair.
///
/// Weights realize the Stieltjes sum exactly for step profiles:
/// `w_{k,j} = μ₊(t_k − t_{j-1}) − μ₊(t_k − t_j)`. On uniform grids the
/// differences `t_k − t_j` collapse to grid points and the kernel is stored
/// in Toeplitz (lag) form, which makes grid-aligned shift commutation exact
/// to the bit, not merely up to rounding.
pub struct PoissonKernel {
    grid: Vec<f64>,
    atom: f64,
    lags: Option<Vec<f64>>,
    rows: Option<Vec<Vec<f64>>>,
}

impl PoissonKernel {
    pub fn new(model: &IntensityModel, grid: &[f64]) -> Result<Self> {
        if grid.is_empty() {
            return Err(SmoothingError::InvalidProfile("empty grid".into()));
        }
        let uniform = {
            let h = grid[0];
            grid.windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h)
        };
        if uniform {
            // lag m covers the cell (t_m, t_{m+1}] of the difference t_k − t_j
            let mut masses = Vec::with_capacity(grid.len() + 1);
            masses.push(0.0);
            for &t in grid {
                masses.push(model.positive_mass(t)?);
            }
            let lags: Vec<f64> = (0..grid.len()).map(|m| masses[m + 1] - masses[m]).collect();
            Ok(PoissonKernel {
                grid: grid.to_vec(),
                atom: model.atom_mass,
                lags: Some(lags),
                rows: None,
            })
        } else {
            let mut rows = Vec::with_capacity(grid.len());
            for (k, &tk) in grid.iter().enumerate() {
                let mut row = Vec::with_capacity(k + 1);
                let mut upper = model.positive_mass(tk)?;
                for &tj in grid.iter().take(k + 1) {
                    let lower = model.positive_mass((tk - tj).max(0.0))?;
                    row.push((upper - lower).max(0.0));
                    upper = lower;
                }
                rows.push(row);
            }
            Ok(PoissonKernel {
                grid: grid.to_vec(),
                atom: model.atom_mass,
                lags: None,
                rows: Some(rows),
            })
        }
    }

    /// One application of the transform to a step profile on this grid.
    pub fn apply(&self, phi: &Profile) -> Result<Profile> {
        if phi.grid != self.grid {
            return Err(SmoothingError::GridMismatch);
        }
        let v = &phi.values;
        let k_len = v.len();
        let mut out = Vec::with_capacity(k_len);
        for k in 0..k_len {
            let mut exponent = (1.0 - v[k]) * self.atom;
            if let Some(lags) = &self.lags {
                // cell j of the profile pairs with lag k−j
                for (j, vj) in v.iter().enumerate().take(k + 1) {
                    exponent += (1.0 - vj) * lags[k - j];
                }
            } else {
                let row = &self.rows.as_ref().unwrap()[k];
                for (j, vj) in v.iter().enumerate().take(k + 1) {
                    exponent += (1.0 - vj) * row[j];
                }
            }
            out.push((-exponent).exp());
        }
        // the transform preserves monotone step profiles up to float dust;
        // pin tiny inversions so the output is again a valid profile
        for k in 1..k_len {
            if out[k] > out[k - 1] {
                debug_assert!(out[k] - out[k - 1] <= 1e-12);
                out[k] = out[k - 1];
            }
        }
        Profile::new(self.grid.clone(), out)
    }
}

/// Closed-form transform under a Poisson reproduction law.
pub fn apply_poisson(model: &IntensityModel, phi: &Profile) -> Result<Profile> {
    PoissonKernel::new(model, &phi.grid)?.apply(phi)
}

/// Transform estimated by averaging over sampled configurations. Raw means
/// are reported without monotonicity repair; the worst inversion size is
/// surfaced instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTransform {
    pub grid: Vec<f64>,
    pub means: Vec<f64>,
    /// 95% normal-approximation half-widths per grid point.
    pub half_widths: Vec<f64>,
    /// Largest upward step `means[k+1] − means[k]`, 0 when monotone.
    pub max_monotonicity_violation: f64,
    pub samples: u64,
}

const MC_CHUNK: u64 = 1024;

/// Monte-Carlo transform: for every grid `t`, averages `∏_j φ(t − X_j)` over
/// independent configurations sampled on the full grid horizon.
pub fn apply_mc(
    law: &ReproductionLaw,
    phi: &Profile,
    samples: u64,
    rng: &RngStream,
) -> Result<McTransform> {
    if samples == 0 {
        return Err(SmoothingError::InvalidParameter(
            "samples must be at least 1".into(),
        ));
    }
    // per-chunk sums and sums of squares for each grid point
    type ChunkSums = std::result::Result<(Vec<f64>, Vec<f64>), SmoothingError>;
    let horizon = *phi.grid.last().unwrap();
    let k_len = phi.len();
    let chunks: u64 = samples.div_ceil(MC_CHUNK);
    // fixed-size chunks summed in index order keep the reduction identical
    // for every thread count
    let partials: Vec<ChunkSums> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * MC_CHUNK;
            let hi = ((chunk + 1) * MC_CHUNK).min(samples);
            let mut sum = vec![0.0f64; k_len];
            let mut sumsq = vec![0.0f64; k_len];
            for i in lo..hi {
                let mut stream = rng.child(i);
                let s = sample_within(law, horizon, &mut stream)?;
                for k in 0..k_len {
                    let t = phi.grid[k];
                    let mut prod = phi.values[k].powi(s.zero_count.min(1 << 30) as i32);
                    for &x in &s.positive_times {
                        if x > t {
                            break;
                        }
                        prod *= phi.eval(t - x);
                        if prod == 0.0 {
                            break;
                        }
                    }
                    sum[k] += prod;
                    sumsq[k] += prod * prod;
                }
            }
            Ok((sum, sumsq))
        })
        .collect();

    let mut sum = vec![0.0f64; k_len];
    let mut sumsq = vec![0.0f64; k_len];
    for part in partials {
        let (s, q) = part?;
        for k in 0..k_len {
            sum[k] += s[k];
            sumsq[k] += q[k];
        }
    }
    let n = samples as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let half_widths: Vec<f64> = (0..k_len)
        .map(|k| {
            if samples < 2 {
                return 0.5;
            }
            let var = ((sumsq[k] - sum[k] * sum[k] / n) / (n - 1.0)).max(0.0);
            1.959_963_984_540_054 * (var / n).sqrt()
        })
        .collect();
    let violation = means
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0))
        .fold(0.0, f64::max);
    Ok(McTransform {
        grid: phi.grid.clone(),
        means,
        half_widths,
        max_monotonicity_violation: violation,
        samples,
    })
}

/// Triviality classification of an iteration limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrivialityVerdict {
    /// The limit dips below `1 − triv_tol`: a genuine survival profile.
    NonTrivial,
    /// Converged and indistinguishable from the constant 1.
    Trivial,
    /// Finite budget could not separate the two.
    Undecided,
}

/// Outcome of a fixed-point iteration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub final_profile: Profile,
    /// Sup-norm change per iteration.
    pub residuals: Vec<f64>,
    pub verdict: TrivialityVerdict,
    pub iterations: u32,
    /// The last residual fell below the tolerance within the budget.
    pub converged: bool,
}

fn classify(final_profile: Profile, residuals: Vec<f64>, tol: f64, triv_tol: f64) -> IterationResult {
    let min_value = final_profile.min_value();
    let last_residual = residuals.last().copied().unwrap_or(0.0);
    let converged = last_residual < tol;
    let verdict = if min_value <= 1.0 - triv_tol {
        TrivialityVerdict::NonTrivial
    } else if converged {
        TrivialityVerdict::Trivial
    } else {
        TrivialityVerdict::Undecided
    };
    IterationResult {
        final_profile,
        iterations: residuals.len() as u32,
        residuals,
        verdict,
        converged,
    }
}

fn check_iteration_params(max_iter: u32, tol: f64, triv_tol: f64) -> Result<()> {
    if max_iter == 0 {
        return Err(SmoothingError::InvalidParameter("max_iter must be at least 1".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SmoothingError::InvalidParameter(format!(
            "tol must be positive, got {tol}"
        )));
    }
    if !(triv_tol.is_finite() && triv_tol > 0.0 && triv_tol < 1.0) {
        return Err(SmoothingError::InvalidParameter(format!(
            "triv_tol must lie in (0, 1), got {triv_tol}"
        )));
    }
    Ok(())
}

/// Iterates the closed-form transform until the sup-norm change drops below
/// `tol` or the budget runs out.
pub fn iterate_poisson(
    model: &IntensityModel,
    phi0: &Profile,
    max_iter: u32,
    tol: f64,
    triv_tol: f64,
) -> Result<IterationResult> {
    check_iteration_params(max_iter, tol, triv_tol)?;
    let kernel = PoissonKernel::new(model, &phi0.grid)?;
    let mut current = phi0.clone();
    let mut residuals = Vec::new();
    for _ in 0..max_iter {
        let next = kernel.apply(&current)?;
        let res = next.sup_distance(&current)?;
        residuals.push(res);
        current = next;
        if res < tol {
            break;
        }
    }
    Ok(classify(current, residuals, tol, triv_tol))
}

/// Iterates the Monte-Carlo transform. The tolerance must clear three times
/// the statistical noise floor of one application, otherwise the stopping
/// rule would fire on noise.
pub fn iterate_mc(
    law: &ReproductionLaw,
    phi0: &Profile,
    samples: u64,
    max_iter: u32,
    tol: f64,
    triv_tol: f64,
    rng: &RngStream,
) -> Result<IterationResult> {
    check_iteration_params(max_iter, tol, triv_tol)?;
    // worst-case binomial half-width at p = 1/2
    let noise = 1.959_963_984_540_054 * 0.5 / (samples as f64).sqrt();
    if tol < 3.0 * noise {
        return Err(SmoothingError::ToleranceBelowNoise {
            tol,
            noise,
        });
    }
    let mut current = phi0.clone();
    let mut residuals = Vec::new();
    for iter in 0..max_iter {
        let mc = apply_mc(law, &current, samples, &rng.child(iter as u64))?;
        // re-impose monotonicity with a running minimum so the chain stays
        // inside the profile space; raw means wobble by sampling noise
        let mut vals = mc.means.clone();
        let mut running = 1.0f64;
        for v in &mut vals {
            running = running.min(v.clamp(0.0, 1.0));
            *v = running;
        }
        let next = Profile::new(current.grid.clone(), vals)?;
        let res = next.sup_distance(&current)?;
        residuals.push(res);
        current = next;
        if res < tol {
            break;
        }
    }
    Ok(classify(current, residuals, tol, triv_tol))
}

/// Grid-aligned translation `(θ_c φ)(t) = φ(t − c)` with 1-padding on the
/// left. The offset must land on the grid and the grid must be closed under
/// subtracting it; no interpolation is ever applied.
pub fn shift_profile(phi: &Profile, c: f64) -> Result<Profile> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(SmoothingError::InvalidParameter(format!(
            "shift must be non-negative, got {c}"
        )));
    }
    if c == 0.0 {
        return Ok(phi.clone());
    }
    let grid = &phi.grid;
    let tol = 1e-9 * c.max(1.0);
    let j = match grid.iter().position(|&t| (t - c).abs() <= tol) {
        Some(j) => j,
        None => return Err(SmoothingError::ShiftNotAligned { c }),
    };
    for k in (j + 1)..grid.len() {
        if ((grid[k] - c) - grid[k - j - 1]).abs() > tol {
            return Err(SmoothingError::ShiftNotAligned { c });
        }
    }
    let mut values = vec![1.0; grid.len()];
    let tail = grid.len() - j - 1;
    values[j + 1..].copy_from_slice(&phi.values[..tail]);
    Profile::new(grid.clone(), values)
}

/// Per-generation means of the product statistic `∏_{|u|=n} φ(t − S_u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDiagnostic {
    /// `φ(t)`, the constant the means should track for a fixed point.
    pub target: f64,
    /// Sup-norm fixed-point defect of `φ` (closed form; Poisson laws only).
    pub fixed_point_residual: Option<f64>,
    /// Mean of the product per generation `0..=generations`.
    pub means: Vec<f64>,
    pub half_widths: Vec<f64>,
    /// Replicas whose population hit the internal cap (their later products
    /// are scored 0, the explosive limit).
    pub capped_replicas: u64,
}

/// Simulates genealogies within horizon `t` and records the empirical mean
/// of the generation-`n` product statistic. For a fixed point the sequence
/// is flat at `φ(t)`; the defect is reported, not enforced.
pub fn martingale_diagnostic(
    law: &ReproductionLaw,
    phi: &Profile,
    t: f64,
    generations: u32,
    replicas: u64,
    seed: u64,
) -> Result<MartingaleDiagnostic> {
    if !(t.is_finite() && t > 0.0) {
        return Err(SmoothingError::InvalidParameter(format!(
            "evaluation time must be positive, got {t}"
        )));
    }
    if replicas == 0 {
        return Err(SmoothingError::InvalidParameter("replicas must be at least 1".into()));
    }
    let fixed_point_residual = match law {
        ReproductionLaw::PoissonPp { model } => Some(apply_poisson(model, phi)?.sup_distance(phi)?),
        _ => None,
    };
    const CAP: usize = 200_000;

    let root = RngStream::from_seed(seed);
    let per_replica: Vec<std::result::Result<(Vec<f64>, bool), SmoothingError>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let replica = root.child(i);
            let mut products = Vec::with_capacity(generations as usize + 1);
            products.push(phi.eval(t));
            let mut gen: Vec<(f64, RngStream)> = vec![(0.0, replica.child(0))];
            let mut capped = false;
            for _ in 0..generations {
                let mut next: Vec<(f64, RngStream)> = Vec::new();
                let mut prod = 1.0f64;
                'parents: for (birth, stream) in &gen {
                    let mut sampler = *stream;
                    let s = sample_within(law, t - birth, &mut sampler)?;
                    let mut child_index = 0u64;
                    for _ in 0..s.zero_count {
                        child_index += 1;
                        if next.len() == CAP {
                            capped = true;
                            break 'parents;
                        }
                        prod *= phi.eval(t - birth);
                        next.push((*birth, stream.child(child_index)));
                    }
                    for &x in &s.positive_times {
                        child_index += 1;
                        if next.len() == CAP {
                            capped = true;
                            break 'parents;
                        }
                        let b = (birth + x).min(t);
                        prod *= phi.eval(t - b);
                        next.push((b, stream.child(child_index)));
                    }
                }
                if capped {
                    // a capped population is astronomically large; its true
                    // product is indistinguishable from 0
                    products.resize(generations as usize + 1, 0.0);
                    break;
                }
                products.push(prod);
                gen = next;
                if gen.is_empty() {
                    // empty generations keep the empty-product convention
                    products.resize(generations as usize + 1, 1.0);
                    break;
                }
            }
            Ok((products, capped))
        })
        .collect();

    let len = generations as usize + 1;
    let mut sum = vec![0.0f64; len];
    let mut sumsq = vec![0.0f64; len];
    let mut capped_replicas = 0u64;
    for r in per_replica {
        let (products, capped) = r?;
        capped_replicas += capped as u64;
        for (k, &p) in products.iter().enumerate() {
            sum[k] += p;
            sumsq[k] += p * p;
        }
    }
    let n = replicas as f64;
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let half_widths: Vec<f64> = (0..len)
        .map(|k| {
            if replicas < 2 {
                return 0.5;
            }
            let var = ((sumsq[k] - sum[k] * sum[k] / n) / (n - 1.0)).max(0.0);
            1.959_963_984_540_054 * (var / n).sqrt()
        })
        .collect();
    Ok(MartingaleDiagnostic {
        target: phi.eval(t),
        fixed_point_residual,
        means,
        half_widths,
        capped_replicas,
    })
}
