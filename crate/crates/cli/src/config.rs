//! Experiment configuration: one TOML document per run, parsed strictly and
//! echoed in full into every output artifact so results stay attributable to
//! their inputs. Defaults are filled at parse time; the in-memory struct is
//! always the effective configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cmjx_core::criteria::{AjSpec, GwveVariant};
use cmjx_core::genealogy::{EnvSpec, GenealogyConfig};
use cmjx_core::intensity::{AssumptionReport, IntensityModel};
use cmjx_core::reproduction::{DisplacementLaw, OffspringLaw, ReproductionLaw};
use cmjx_core::smoothing::{geometric_grid, uniform_grid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Iterate,
    Criteria,
    Compare,
    Gwve,
    Dwass,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Iterate => "iterate",
            ExperimentKind::Criteria => "criteria",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Gwve => "gwve",
            ExperimentKind::Dwass => "dwass",
        }
    }
}

/// Single experiment description; which blocks must be present depends on
/// `kind` and is enforced by [`validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Root seed for every random stream in the run.
    pub seed: u64,
    /// Intensity of the reproduction point process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<IntensityModel>,
    /// Second intensity for `compare`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_alt: Option<IntensityModel>,
    /// Reproduction law for `simulate`; defaults to the Poisson point
    /// process driven by `model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<ReproductionLaw>,
    /// Offspring law for `dwass`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring: Option<OffspringLaw>,
    /// Offspring environment for `gwve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
    /// Truncation budget for genealogy growth (`simulate`, `compare`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genealogy: Option<GenealogyConfig>,
    /// Evaluation grid for `iterate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate: Option<IterateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<CriteriaBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gwve: Option<GwveBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwass: Option<DwassBlock>,
    /// Replica count for `simulate` and `compare`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "spacing", rename_all = "snake_case")]
pub enum GridSpec {
    /// Geometric points on `(lo, hi]`, endpoint included, `lo` excluded.
    Geometric { lo: f64, hi: f64, points: usize },
    /// Uniform points `hi·k/points`, `k = 1..=points`.
    Uniform { hi: f64, points: usize },
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        match *self {
            GridSpec::Geometric { lo, hi, points } => {
                if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                    bail!("geometric grid needs 0 < lo < hi, got lo = {lo}, hi = {hi}");
                }
                if points < 2 {
                    bail!("grid needs at least 2 points, got {points}");
                }
                Ok(geometric_grid(lo, hi, points))
            }
            GridSpec::Uniform { hi, points } => {
                if !(hi.is_finite() && hi > 0.0) {
                    bail!("uniform grid needs hi > 0, got {hi}");
                }
                if points < 2 {
                    bail!("grid needs at least 2 points, got {points}");
                }
                Ok(uniform_grid(hi, points))
            }
        }
    }

}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateBlock {
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
    /// Sup-norm residual threshold for convergence.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Distance from 1 below which the limit counts as non-trivial.
    #[serde(default = "default_triv_tol")]
    pub triv_tol: f64,
    /// Start from `1_{(-inf, shift]}` instead of the plain indicator; must
    /// coincide with a grid point.
    #[serde(default)]
    pub shift: f64,
}

impl Default for IterateBlock {
    fn default() -> Self {
        IterateBlock {
            max_iter: default_max_iter(),
            tol: default_tol(),
            triv_tol: default_triv_tol(),
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaBlock {
    pub run: Vec<CriterionSpec>,
}

/// One analytic test to evaluate against the configured model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum CriterionSpec {
    Integral {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_quad_tol")]
        quad_tol: f64,
    },
    Liminf {
        #[serde(default = "default_delta_probe")]
        delta_probe: f64,
        second_moment_finite: bool,
    },
    GwveSum {
        windows: AjSpec,
        /// Which product series witnesses survival.
        series: GwveVariant,
        #[serde(default = "default_n_max")]
        n_max: u64,
    },
    GwveSurvival {
        env: EnvSpec,
        #[serde(default = "default_n_max")]
        n_max: u64,
    },
    HeavyTail {
        offspring: OffspringLaw,
        displacement: DisplacementLaw,
        delta: f64,
        #[serde(default = "default_quad_tol")]
        quad_tol: f64,
    },
    PsiBound {
        delta: f64,
    },
}

impl CriterionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CriterionSpec::Integral { .. } => "integral",
            CriterionSpec::Liminf { .. } => "liminf",
            CriterionSpec::GwveSum { .. } => "gwve_sum",
            CriterionSpec::GwveSurvival { .. } => "gwve_survival",
            CriterionSpec::HeavyTail { .. } => "heavy_tail",
            CriterionSpec::PsiBound { .. } => "psi_bound",
        }
    }

    /// Whether this test reads the top-level `model` block.
    fn needs_model(&self) -> bool {
        matches!(
            self,
            CriterionSpec::Integral { .. }
                | CriterionSpec::Liminf { .. }
                | CriterionSpec::GwveSum { .. }
                | CriterionSpec::PsiBound { .. }
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GwveBlock {
    pub replicas: u64,
    /// Budget for the analytic survival series.
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default = "default_gwve_max_gen")]
    pub max_gen: u32,
    #[serde(default = "default_gwve_pop_cap")]
    pub pop_cap: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwassBlock {
    /// Tabulate the total-progeny law for `n = 1..=n_max`.
    pub n_max: u64,
    /// Monte-Carlo sample count; 0 skips the simulated columns.
    #[serde(default)]
    pub samples: u64,
    #[serde(default = "default_dwass_cap")]
    pub cap: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    /// File-name stem; defaults to the experiment kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: default_out_dir(),
            prefix: None,
        }
    }
}

fn default_max_iter() -> u32 {
    10_000
}
fn default_tol() -> f64 {
    1e-7
}
fn default_triv_tol() -> f64 {
    1e-3
}
fn default_eps() -> f64 {
    0.5
}
fn default_quad_tol() -> f64 {
    1e-10
}
fn default_delta_probe() -> f64 {
    0.5
}
fn default_n_max() -> u64 {
    100_000
}
fn default_gwve_max_gen() -> u32 {
    1_000
}
fn default_gwve_pop_cap() -> u64 {
    1_000_000
}
fn default_dwass_cap() -> u64 {
    100_000
}
fn default_out_dir() -> String {
    "out".to_string()
}

/// Parses a config file, rejects unknown keys at any depth, and applies the
/// command-line overrides. Defaults are filled so the result is the
/// effective configuration.
pub fn load(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let document: toml::Value = toml::from_str(&text)
        .with_context(|| format!("cannot parse {} as TOML", path.display()))?;
    let mut config: ExperimentConfig = document
        .clone()
        .try_into()
        .with_context(|| format!("invalid configuration in {}", path.display()))?;
    check_unknown_keys(&document, &config)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(dir) = out_override {
        config.output.dir = dir.display().to_string();
    }
    if config.output.prefix.is_none() {
        config.output.prefix = Some(config.kind.name().to_string());
    }
    Ok(config)
}

/// Rejects keys present in the document but absent from the parsed struct.
/// Serde ignores unknown keys inside nested and tagged blocks, so the check
/// compares the document's key paths against the echo of the typed config.
fn check_unknown_keys(document: &toml::Value, config: &ExperimentConfig) -> Result<()> {
    let mut given = BTreeSet::new();
    collect_toml_paths(document, "", &mut given);
    let mut known = BTreeSet::new();
    collect_json_paths(&serde_json::to_value(config)?, "", &mut known);
    let unknown: Vec<String> = given.difference(&known).cloned().collect();
    if !unknown.is_empty() {
        bail!("unknown configuration keys: {}", unknown.join(", "));
    }
    Ok(())
}

fn collect_toml_paths(value: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    match value {
        toml::Value::Table(table) => {
            for (key, child) in table {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                out.insert(path.clone());
                collect_toml_paths(child, &path, out);
            }
        }
        toml::Value::Array(items) => {
            // elements share the prefix: list entries are validated as a set
            for child in items {
                collect_toml_paths(child, prefix, out);
            }
        }
        _ => {}
    }
}

fn collect_json_paths(value: &serde_json::Value, prefix: &str, out: &mut BTreeSet<String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (key, child) in map {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                out.insert(path.clone());
                collect_json_paths(child, &path, out);
            }
        }
        serde_json::Value::Array(items) => {
            for child in items {
                collect_json_paths(child, prefix, out);
            }
        }
        _ => {}
    }
}

/// Outcome of schema plus cross-field validation, echoed to the caller.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub kind: ExperimentKind,
    /// Descriptions of the cross-field checks that were performed and held.
    pub checks: Vec<String>,
    /// Structural assumptions of the model when a criteria run relies on
    /// them; informational, a failed assumption is a legitimate input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<AssumptionReport>,
}

/// Full cross-field validation without executing the experiment.
pub fn validate(config: &ExperimentConfig) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let mut assumptions = None;

    if let Some(model) = &config.model {
        model.validate()?;
        checks.push("model parameters valid".into());
    }
    if let Some(model) = &config.model_alt {
        model.validate()?;
        checks.push("model_alt parameters valid".into());
    }
    if let Some(law) = &config.law {
        law.validate()?;
        checks.push("reproduction law valid".into());
    }
    if let Some(offspring) = &config.offspring {
        offspring.validate()?;
        checks.push("offspring law valid".into());
    }
    if let Some(env) = &config.env {
        validate_env(env)?;
        checks.push("environment valid".into());
    }
    if let Some(genealogy) = &config.genealogy {
        genealogy.validate()?;
        checks.push("genealogy budget valid".into());
    }
    if let Some(grid) = &config.grid {
        grid.build()?;
        checks.push("grid constructible".into());
    }

    match config.kind {
        ExperimentKind::Simulate => {
            require(
                config.law.is_some() || config.model.is_some(),
                "simulate needs a [law] or [model] block",
            )?;
            require(config.genealogy.is_some(), "simulate needs a [genealogy] block")?;
            positive_replicas(config)?;
        }
        ExperimentKind::Iterate => {
            require(config.model.is_some(), "iterate needs a [model] block")?;
            let grid_spec = config
                .grid
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("iterate needs a [grid] block"))?;
            let block = config.iterate.clone().unwrap_or_default();
            if !(block.tol.is_finite() && block.tol > 0.0) {
                bail!("iterate tol must be positive, got {}", block.tol);
            }
            if !(block.triv_tol.is_finite() && block.triv_tol > 0.0) {
                bail!("iterate triv_tol must be positive, got {}", block.triv_tol);
            }
            if block.shift != 0.0 {
                let grid = grid_spec.build()?;
                check_shift_alignment(&grid, block.shift)?;
                checks.push(format!("shift {} is grid-aligned", block.shift));
            }
        }
        ExperimentKind::Criteria => {
            let block = config
                .criteria
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("criteria needs a [criteria] block"))?;
            require(!block.run.is_empty(), "criteria.run must list at least one test")?;
            for spec in &block.run {
                if spec.needs_model() {
                    require(
                        config.model.is_some(),
                        "criteria entries referencing the model need a [model] block",
                    )?;
                }
                validate_criterion(spec)?;
                checks.push(format!("{} parameters valid", spec.name()));
            }
            let wants_assumptions = block.run.iter().any(|s| {
                matches!(
                    s,
                    CriterionSpec::Integral { .. } | CriterionSpec::PsiBound { .. }
                )
            });
            if wants_assumptions {
                if let Some(model) = &config.model {
                    assumptions = Some(model.check_assumptions());
                    checks.push("model assumptions probed".into());
                }
            }
        }
        ExperimentKind::Compare => {
            require(config.model.is_some(), "compare needs a [model] block")?;
            require(config.model_alt.is_some(), "compare needs a [model_alt] block")?;
            require(config.genealogy.is_some(), "compare needs a [genealogy] block")?;
            positive_replicas(config)?;
        }
        ExperimentKind::Gwve => {
            require(config.env.is_some(), "gwve needs an [env] block")?;
            let block = config
                .gwve
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("gwve needs a [gwve] block"))?;
            require(block.replicas > 0, "gwve.replicas must be positive")?;
            require(block.n_max > 0, "gwve.n_max must be positive")?;
            require(block.max_gen > 0, "gwve.max_gen must be positive")?;
            require(block.pop_cap > 0, "gwve.pop_cap must be positive")?;
        }
        ExperimentKind::Dwass => {
            require(config.offspring.is_some(), "dwass needs an [offspring] block")?;
            let block = config
                .dwass
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("dwass needs a [dwass] block"))?;
            require(block.n_max > 0, "dwass.n_max must be positive")?;
            require(block.cap > 0, "dwass.cap must be positive")?;
        }
    }

    Ok(ValidationReport {
        kind: config.kind,
        checks,
        assumptions,
    })
}

fn require(condition: bool, message: &str) -> Result<()> {
    if condition {
        Ok(())
    } else {
        bail!("{message}");
    }
}

fn positive_replicas(config: &ExperimentConfig) -> Result<()> {
    match config.replicas {
        Some(n) if n > 0 => Ok(()),
        Some(n) => bail!("replicas must be positive, got {n}"),
        None => bail!("{} needs a replicas field", config.kind.name()),
    }
}

fn validate_env(env: &EnvSpec) -> Result<()> {
    match env {
        EnvSpec::Constant { law } => law.validate()?,
        EnvSpec::List { laws, .. } => {
            require(!laws.is_empty(), "environment list must not be empty")?;
            for law in laws {
                law.validate()?;
            }
        }
        EnvSpec::PoissonPower { exponent } => {
            require(
                exponent.is_finite() && *exponent > 0.0,
                "environment exponent must be positive",
            )?;
        }
    }
    Ok(())
}

fn validate_criterion(spec: &CriterionSpec) -> Result<()> {
    match spec {
        CriterionSpec::Integral { eps, quad_tol } => {
            if !(eps.is_finite() && *eps > 0.0 && *eps < 1.0) {
                bail!("integral eps must lie in the open interval (0, 1), got {eps}");
            }
            positive_tol("integral quad_tol", *quad_tol)
        }
        CriterionSpec::Liminf { delta_probe, .. } => {
            if !(delta_probe.is_finite() && *delta_probe > 0.0) {
                bail!("liminf delta_probe must be positive, got {delta_probe}");
            }
            Ok(())
        }
        CriterionSpec::GwveSum { series, n_max, .. } => {
            if let GwveVariant::Damped { delta } = series {
                if !(delta.is_finite() && *delta > 0.0 && *delta < 1.0) {
                    bail!("gwve_sum damping delta must lie in (0, 1), got {delta}");
                }
            }
            require(*n_max > 0, "gwve_sum n_max must be positive")
        }
        CriterionSpec::GwveSurvival { env, n_max } => {
            validate_env(env)?;
            require(*n_max > 0, "gwve_survival n_max must be positive")
        }
        CriterionSpec::HeavyTail {
            offspring,
            displacement,
            delta,
            quad_tol,
        } => {
            offspring.validate()?;
            displacement.validate()?;
            if !(delta.is_finite() && *delta > 0.0 && *delta <= 0.5) {
                bail!("heavy_tail delta must lie in (0, 1/2], got {delta}");
            }
            positive_tol("heavy_tail quad_tol", *quad_tol)
        }
        CriterionSpec::PsiBound { delta } => {
            if !(delta.is_finite() && *delta > 0.0 && *delta < 1.0) {
                bail!("psi_bound delta must lie in the open interval (0, 1), got {delta}");
            }
            Ok(())
        }
    }
}

fn positive_tol(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        bail!("{name} must be positive, got {value}");
    }
}

/// Same alignment rule as the shift operator: the offset must sit on a grid
/// point up to a relative slack.
fn check_shift_alignment(grid: &[f64], shift: f64) -> Result<()> {
    if !(shift.is_finite() && shift > 0.0) {
        bail!("shift must be non-negative and finite, got {shift}");
    }
    let slack = 1e-9 * shift.max(1.0);
    let aligned = grid.iter().any(|&t| (t - shift).abs() <= slack);
    if !aligned {
        bail!("shift {shift} is not aligned with any grid point");
    }
    Ok(())
}
