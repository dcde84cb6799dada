//! Experiment configuration, read from a TOML file.
//!
//! Every table rejects unknown keys. All fields except the ones that define
//! the system are optional and fall back to the defaults documented on each
//! field; see `configs/` in the repository for complete examples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use histories::ergodic::FrequencyPredicate;
use histories::history::MeasurementSchedule;
use histories::ndm::{MixtureState, NdmModel};
use histories::{Alphabet, ComplexMatrix, DensityMatrix, Instrument, Projection};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

/// Which suite a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Verify,
    Sample,
    Disintegrate,
    #[serde(alias = "theorem-checks")]
    Checks,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Verify => "verify",
            Kind::Sample => "sample",
            Kind::Disintegrate => "disintegrate",
            Kind::Checks => "checks",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Suite this file is meant for; when present it must match the
    /// subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    /// Top-level seed (default 0); `--seed` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Names of the checks to run; default: every check of the suite that
    /// applies to the system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

/// The label/probe reference model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Largest label `N` (default 1). Ignored in favour of `p_one` when that
    /// is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// `p(1|ν)` per label; default `(ν + 1)/(N + 2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_one: Option<Vec<f64>>,
    /// Label weights `ω(Q_ν)`; default uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// An explicit projective schedule. Matrices are row-major lists of
/// `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub alphabet: Vec<String>,
    /// Cycle through `steps` forever (default true); otherwise the horizon
    /// is the number of steps.
    #[serde(default = "yes")]
    pub periodic: bool,
    pub steps: Vec<StepSpec>,
    /// Initial density matrix; default maximally mixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<Vec<[f64; 2]>>>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    /// One projection per alphabet symbol.
    pub projections: Vec<Vec<Vec<[f64; 2]>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Trajectory length (default 1000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Number of trajectories (default 1000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    /// Enumeration depth of the verification checks (default 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Depth of the exact disintegration (default 6).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_depth: Option<usize>,
    /// Depth of empirical conditionals (default 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_depth: Option<usize>,
    /// Clustering radius (default 0.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_mol: Option<f64>,
    /// Discarded prefix fraction (default 0.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    /// Fewest trajectories accepted by the empirical disintegration
    /// (default 10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_trajectories: Option<usize>,
    /// Window lengths of the tail-convergence series (default 10, 100, 1000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_depths: Option<Vec<usize>>,
    /// Horizons at which the purification series is sampled (default:
    /// 10, 100, … up to the horizon, and the horizon itself).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// Depths of the mutual-singularity series (default 1, 5, 10, 20, 60, 200).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singularity_depths: Option<Vec<usize>>,
    /// Horizons of the 0-1 law series (default 10, 100, 1000, 10000).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_one_horizons: Option<Vec<usize>>,
    /// Closed tail-event intervals `[lower, upper]` for the frequency of `1`
    /// (default: `[m, 1]` and `[0, m − g/4]`, where `m` is the midpoint of
    /// the central gap `g` between adjacent `p(1|ν)`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicates: Option<Vec<[f64; 2]>>,
    /// Depth of the extremality tables (default 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremality_depth: Option<usize>,
    /// Random `(f, Δ)` and `(ω, f)` pairs of the theorem checks (default 20).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    /// Smallest acceptable classification accuracy, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_accuracy: Option<f64>,
    /// Write every outcome into `trajectories.jsonl` (default true).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_outcomes: Option<bool>,
}

/// Pass thresholds; every entry must be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub povm: f64,
    pub additivity: f64,
    pub duality: f64,
    pub consistency: f64,
    pub decoherence: f64,
    pub homomorphism: f64,
    pub theorem4: f64,
    pub de_finetti: f64,
    pub tail: f64,
    pub reconstruction: f64,
    /// Weights within this many binomial standard deviations.
    pub weight_sigma: f64,
    /// Largest total variation between empirical and exact conditionals.
    pub conditional_tv: f64,
    /// Distance from 0 or 1 of the 0-1 law estimates.
    pub zero_one: f64,
    /// Total variation required between conditionals at the deepest depth.
    pub singularity_tv: f64,
    /// Extremality threshold `δ_ext`.
    pub extremality: f64,
    pub moments: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            povm: 1e-12,
            additivity: 1e-10,
            duality: 1e-10,
            consistency: 1e-10,
            decoherence: 1e-10,
            homomorphism: 1e-10,
            theorem4: 1e-9,
            de_finetti: 1e-14,
            tail: 1e-6,
            reconstruction: 1e-10,
            weight_sigma: 3.0,
            conditional_tv: 0.05,
            zero_one: 0.02,
            singularity_tv: 0.99,
            extremality: 1e-3,
            moments: 1e-9,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 16] {
        [
            ("povm", self.povm),
            ("additivity", self.additivity),
            ("duality", self.duality),
            ("consistency", self.consistency),
            ("decoherence", self.decoherence),
            ("homomorphism", self.homomorphism),
            ("theorem4", self.theorem4),
            ("de_finetti", self.de_finetti),
            ("tail", self.tail),
            ("reconstruction", self.reconstruction),
            ("weight_sigma", self.weight_sigma),
            ("conditional_tv", self.conditional_tv),
            ("zero_one", self.zero_one),
            ("singularity_tv", self.singularity_tv),
            ("extremality", self.extremality),
            ("moments", self.moments),
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory (default `out`); `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// The system a configuration describes.
pub enum System {
    Model { model: NdmModel, state: MixtureState },
    Schedule { schedule: MeasurementSchedule, state: DensityMatrix },
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_string(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: display.clone(), source })?;
        Self::from_toml(&text, &display)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in self.tolerances.entries() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(invalid(&format!("tolerances.{name}"), "must be positive and finite"));
            }
        }
        let r = &self.run;
        for (name, value) in [
            ("run.horizon", r.horizon),
            ("run.trajectories", r.trajectories),
            ("run.depth", r.depth),
            ("run.exact_depth", r.exact_depth),
            ("run.empirical_depth", r.empirical_depth),
            ("run.extremality_depth", r.extremality_depth),
            ("run.pairs", r.pairs),
        ] {
            if value == Some(0) {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        if r.eps_mol.is_some_and(|e| !(e > 0.0)) {
            return Err(invalid("run.eps_mol", "must be positive"));
        }
        if r.burn_in.is_some_and(|b| !(0.0..1.0).contains(&b)) {
            return Err(invalid("run.burn_in", "must lie in [0, 1)"));
        }
        if r.min_accuracy.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return Err(invalid("run.min_accuracy", "must lie in [0, 1]"));
        }
        for (name, list) in [
            ("run.tail_depths", &r.tail_depths),
            ("run.checkpoints", &r.checkpoints),
            ("run.singularity_depths", &r.singularity_depths),
            ("run.zero_one_horizons", &r.zero_one_horizons),
        ] {
            if let Some(list) = list {
                if list.is_empty() || list.contains(&0) {
                    return Err(invalid(name, "must be a non-empty list of positive integers"));
                }
            }
        }
        if let Some(preds) = &r.predicates {
            if preds.iter().any(|[lo, hi]| !(lo <= hi)) {
                return Err(invalid("run.predicates", "every interval needs lower ≤ upper"));
            }
        }
        if self.model.is_some() && self.schedule.is_some() {
            return Err(invalid("schedule", "give either [model] or [schedule], not both"));
        }
        self.system()?;
        Ok(())
    }

    /// Builds the configured system; the default is the `N = 1` model with
    /// uniform weights.
    pub fn system(&self) -> Result<System, ConfigError> {
        if let Some(spec) = &self.schedule {
            return build_schedule(spec);
        }
        let spec = self.model.clone().unwrap_or_default();
        let model = match &spec.p_one {
            Some(p) => NdmModel::binary(p).map_err(|e| invalid("model.p_one", e.to_string()))?,
            None => NdmModel::default_law(spec.n_max.unwrap_or(1)),
        };
        if let (Some(p), Some(n)) = (&spec.p_one, spec.n_max) {
            if p.len() != n + 1 {
                return Err(invalid("model.n_max", format!("{} values in p_one for N = {n}", p.len())));
            }
        }
        let state = match &spec.weights {
            Some(w) => MixtureState::new(w.clone()).map_err(|e| invalid("model.weights", e.to_string()))?,
            None => MixtureState::uniform(model.labels()),
        };
        if state.weights().len() != model.labels() {
            return Err(invalid(
                "model.weights",
                format!("{} weights for {} labels", state.weights().len(), model.labels()),
            ));
        }
        Ok(System::Model { model, state })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn predicates(&self, model: &NdmModel) -> Vec<FrequencyPredicate> {
        match &self.run.predicates {
            Some(list) => list.iter().map(|&[lower, upper]| FrequencyPredicate { lower, upper }).collect(),
            None => {
                // Split [0, 1] in the middle of the central gap between
                // adjacent `p(1|ν)`, leaving a quarter-gap margin on each side.
                let mut p: Vec<f64> = (0..model.labels()).map(|nu| model.p_one(nu)).collect();
                p.sort_by(f64::total_cmp);
                let (lo, hi) = if p.len() == 1 {
                    if p[0] < 0.5 { (p[0], 1.0) } else { (0.0, p[0]) }
                } else {
                    let k = (p.len() - 1) / 2;
                    (p[k], p[k + 1])
                };
                let mid = 0.5 * (lo + hi);
                let margin = 0.25 * (hi - lo);
                vec![
                    FrequencyPredicate { lower: mid, upper: 1.0 },
                    FrequencyPredicate { lower: 0.0, upper: mid - margin },
                ]
            }
        }
    }
}

fn matrix(field: &str, rows: &[Vec<[f64; 2]>]) -> Result<ComplexMatrix, ConfigError> {
    ComplexMatrix::from_pairs(rows).map_err(|e| invalid(field, e.to_string()))
}

fn build_schedule(spec: &ScheduleSpec) -> Result<System, ConfigError> {
    let alphabet = Alphabet::new(spec.alphabet.clone()).map_err(|e| invalid("schedule.alphabet", e.to_string()))?;
    if spec.steps.is_empty() {
        return Err(invalid("schedule.steps", "at least one step is required"));
    }
    let mut instruments = Vec::with_capacity(spec.steps.len());
    for (i, step) in spec.steps.iter().enumerate() {
        let field = format!("schedule.steps[{i}].projections");
        let projections = step
            .projections
            .iter()
            .map(|rows| Projection::new(matrix(&field, rows)?).map_err(|e| invalid(&field, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        instruments.push(Instrument::new(alphabet.clone(), projections).map_err(|e| invalid(&field, e.to_string()))?);
    }
    let schedule = if spec.periodic { MeasurementSchedule::periodic(instruments) } else { MeasurementSchedule::finite(instruments) }
        .map_err(|e| invalid("schedule.steps", e.to_string()))?;
    let state = match &spec.state {
        Some(rows) => DensityMatrix::new(matrix("schedule.state", rows)?).map_err(|e| invalid("schedule.state", e.to_string()))?,
        None => DensityMatrix::maximally_mixed(schedule.dim()),
    };
    if state.dim() != schedule.dim() {
        return Err(invalid("schedule.state", format!("dimension {} for a {}-dimensional schedule", state.dim(), schedule.dim())));
    }
    Ok(System::Schedule { schedule, state })
}
