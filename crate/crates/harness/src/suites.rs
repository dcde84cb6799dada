//! The four experiment suites and their checks.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use histories::ergodic::{
    compare_disintegrations, disintegrate_empirical, disintegrate_exact, extremality_by_label, extremality_check,
    moment_uniqueness, moments_from_measure, mutual_singularity_check, zero_one_law_check, zero_one_law_monte_carlo,
    EmpiricalSettings, DEFAULT_BURN_IN, DEFAULT_DEPTH, DEFAULT_EPS_MOL,
};
use histories::history::{
    consistency_residual, lsw_probability, CylinderFunction, HistoryMeasure, HistoryPrefix, MeasurementSchedule,
};
use histories::ndm::{
    build_schedule, classify_frequency, phi_tail_exchangeable, sample_many, sample_trajectory, trajectory_rng,
    LabelFunction, MixtureState, NdmModel, Representation,
};
use histories::povm::{
    phi_cylinder, phi_duality_residual, phi_homomorphism_check, phi_sigma_additivity_residual, phi_tail, theorem4_check,
    SymbolFrequency,
};
use histories::stats::{classification_error_bound, wilson_interval};
use histories::{ComplexMatrix, DensityMatrix, C64};

use crate::config::{ConfigError, ExperimentConfig, Kind, System};
use crate::report::{Artifact, CheckResult, Comparison, ConvergenceRow, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Core { context: String, source: histories::Error },
}

trait Context<T> {
    fn context(self, what: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for histories::Result<T> {
    fn context(self, what: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Core { context: what.to_string(), source })
    }
}

type CheckOutcome = Result<CheckResult, histories::Error>;

/// Options that come from the command line.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub kind: Kind,
    pub seed: Option<u64>,
    pub strict: bool,
}

/// A finished run: the report plus the files to write, keyed by name.
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
}

const VERIFY_SCHEDULE: &[&str] = &["povm_identity", "additivity", "duality", "consistency", "decoherence", "homomorphism"];
const VERIFY_MODEL: &[&str] = &[
    "povm_identity",
    "additivity",
    "duality",
    "consistency",
    "decoherence",
    "homomorphism",
    "exchangeability",
    "de_finetti",
    "tail_convergence",
];
const SAMPLE: &[&str] = &["purification", "accuracy"];
const DISINTEGRATE: &[&str] = &["reconstruction", "clustering", "empirical_weights", "empirical_conditionals"];
const CHECKS_SCHEDULE: &[&str] = &["homomorphism", "theorem4"];
const CHECKS_MODEL: &[&str] = &[
    "homomorphism",
    "theorem4",
    "zero_one_law",
    "zero_one_monte_carlo",
    "mutual_singularity",
    "singularity_tv",
    "extremality",
    "mixture_non_extremal",
    "moment_uniqueness",
];
const SOFT: &[&str] = &["tail_convergence", "zero_one_monte_carlo"];

/// Checks a suite can run on the given system, in report order.
pub fn available_checks(kind: Kind, is_model: bool) -> &'static [&'static str] {
    match (kind, is_model) {
        (Kind::Verify, true) => VERIFY_MODEL,
        (Kind::Verify, false) => VERIFY_SCHEDULE,
        (Kind::Sample, _) => SAMPLE,
        (Kind::Disintegrate, _) => DISINTEGRATE,
        (Kind::Checks, true) => CHECKS_MODEL,
        (Kind::Checks, false) => CHECKS_SCHEDULE,
    }
}

fn selected_checks(config: &ExperimentConfig, kind: Kind, is_model: bool) -> Result<Vec<String>, ConfigError> {
    let available = available_checks(kind, is_model);
    match &config.checks {
        None => Ok(available
            .iter()
            .filter(|&&c| c != "accuracy" || config.run.min_accuracy.is_some())
            .map(|c| c.to_string())
            .collect()),
        Some(list) => {
            let mut out: Vec<String> = Vec::with_capacity(list.len());
            for name in list {
                if !available.contains(&name.as_str()) {
                    return Err(ConfigError::Invalid {
                        field: "checks".into(),
                        message: format!("`{name}` is not a {} check for this system (available: {})", kind.name(), available.join(", ")),
                    });
                }
                if name == "accuracy" && config.run.min_accuracy.is_none() {
                    return Err(ConfigError::Invalid { field: "checks".into(), message: "`accuracy` needs run.min_accuracy".into() });
                }
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            Ok(out)
        }
    }
}

/// Random stream `k` reserved for check-internal draws.
fn aux_rng(seed: u64, k: u64) -> ChaCha8Rng {
    trajectory_rng(seed, (1 << 63) | k)
}

/// Executes the configured suite.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunOutput, RunError> {
    let started = Instant::now();
    config.validate()?;
    if let Some(kind) = config.kind {
        if kind != options.kind {
            return Err(ConfigError::Invalid {
                field: "kind".into(),
                message: format!("file is for `{}` but `{}` was requested", kind.name(), options.kind.name()),
            }
            .into());
        }
    }
    let seed = options.seed.unwrap_or_else(|| config.seed());
    let system = config.system()?;
    let is_model = matches!(system, System::Model { .. });
    if !is_model && matches!(options.kind, Kind::Sample | Kind::Disintegrate) {
        return Err(ConfigError::Invalid {
            field: "schedule".into(),
            message: format!("`{}` needs a [model]", options.kind.name()),
        }
        .into());
    }
    let checks = selected_checks(config, options.kind, is_model)?;
    let mut ctx = Ctx::new(config, system, seed)?;
    let mut results = Vec::with_capacity(checks.len());
    let (summary, convergence, files) = match options.kind {
        Kind::Verify => ctx.verify(&checks, &mut results)?,
        Kind::Sample => ctx.sample(&checks, &mut results)?,
        Kind::Disintegrate => ctx.disintegrate(&checks, &mut results)?,
        Kind::Checks => ctx.theorem_checks(&checks, &mut results)?,
    };
    let report = RunReport {
        artifact: Artifact::default(),
        command: options.kind.name().to_string(),
        seed,
        strict: options.strict,
        config: config.clone(),
        checks: results,
        summary,
        convergence,
        elapsed_ms: started.elapsed().as_millis(),
    };
    Ok(RunOutput { report, files })
}

/// Runs one check, timing it and turning library errors into failures.
fn timed(name: &str, f: impl FnOnce() -> CheckOutcome) -> CheckResult {
    let start = Instant::now();
    let hard = !SOFT.contains(&name);
    let mut result = match f() {
        Ok(r) => r,
        Err(e) => CheckResult::failed(name, hard, format!("error: {e}")),
    };
    result.hard = hard;
    result.elapsed_ms = start.elapsed().as_millis();
    result
}

type SuiteOutput = (serde_json::Value, Option<Vec<ConvergenceRow>>, Vec<(String, String)>);

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    model: Option<(NdmModel, MixtureState)>,
    schedule: Arc<MeasurementSchedule>,
    state: DensityMatrix,
    seed: u64,
}

impl<'a> Ctx<'a> {
    fn new(config: &'a ExperimentConfig, system: System, seed: u64) -> Result<Self, RunError> {
        Ok(match system {
            System::Model { model, state } => {
                let schedule = Arc::new(build_schedule(&model, Representation::Block).context("building the block schedule")?);
                let rho = state.density(&model).context("assembling the state")?;
                Self { config, model: Some((model, state)), schedule, state: rho, seed }
            }
            System::Schedule { schedule, state } => Self { config, model: None, schedule: Arc::new(schedule), state, seed },
        })
    }

    fn tol(&self) -> &crate::config::Tolerances {
        &self.config.tolerances
    }

    /// Enumeration depth, capped by the schedule's horizon.
    fn depth(&self) -> usize {
        let d = self.config.run.depth.unwrap_or(4);
        self.schedule.horizon().map_or(d, |h| d.min(h))
    }

    fn model(&self) -> &(NdmModel, MixtureState) {
        self.model.as_ref().expect("suite is only offered for models")
    }

    fn horizon(&self) -> usize {
        self.config.run.horizon.unwrap_or(1000)
    }

    fn trajectories(&self) -> usize {
        self.config.run.trajectories.unwrap_or(1000)
    }

    fn pairs(&self) -> usize {
        self.config.run.pairs.unwrap_or(20)
    }

    fn measure(&self) -> histories::Result<HistoryMeasure> {
        HistoryMeasure::with_decoherence_depth(self.schedule.clone(), self.state.clone(), self.depth())
    }

    // ---------------------------------------------------------------- verify

    fn verify(&mut self, checks: &[String], out: &mut Vec<CheckResult>) -> Result<SuiteOutput, RunError> {
        for name in checks {
            let r = match name.as_str() {
                "povm_identity" => timed(name, || self.povm_identity()),
                "additivity" => timed(name, || self.additivity()),
                "duality" => timed(name, || self.duality()),
                "consistency" => timed(name, || self.consistency()),
                "decoherence" => timed(name, || self.decoherence()),
                "homomorphism" => timed(name, || self.homomorphism()),
                "exchangeability" => timed(name, || self.exchangeability()),
                "de_finetti" => timed(name, || self.de_finetti()),
                "tail_convergence" => timed(name, || self.tail_convergence().map(|(c, _)| c)),
                other => unreachable!("unknown check {other}"),
            };
            out.push(r);
        }
        let rows = if self.model.is_some() {
            self.tail_convergence().map(|(_, rows)| rows).unwrap_or_default()
        } else {
            self.schedule_tail_rows()
        };
        let summary = json!({
            "dim": self.schedule.dim(),
            "alphabet": self.schedule.alphabet().symbols(),
            "horizon": self.schedule.horizon(),
            "depth": self.depth(),
        });
        Ok((summary, Some(rows), Vec::new()))
    }

    fn povm_identity(&self) -> CheckOutcome {
        let d = self.depth();
        let one = CylinderFunction::constant(1, d, self.schedule.alphabet(), C64::new(1.0, 0.0))?;
        let residual = phi_cylinder(&self.schedule, &one)?.max_diff(&ComplexMatrix::identity(self.schedule.dim()))?;
        Ok(CheckResult::measured("povm_identity", true, residual, Comparison::AtMost, self.tol().povm, format!("Φ(1) on steps 1..={d}")))
    }

    fn additivity(&self) -> CheckOutcome {
        let d = self.depth();
        let alphabet = self.schedule.alphabet();
        let mut residual: f64 = 0.0;
        for parts in 2..=4usize {
            let mut groups: Vec<Vec<Vec<usize>>> = vec![Vec::new(); parts];
            for (rank, w) in alphabet.words(d).enumerate() {
                groups[rank % parts].push(w);
            }
            let cylinders = groups
                .iter()
                .filter(|g| !g.is_empty())
                .map(|g| CylinderFunction::indicator_of_set(1, d, alphabet, g))
                .collect::<histories::Result<Vec<_>>>()?;
            residual = residual.max(phi_sigma_additivity_residual(&self.schedule, &cylinders)?);
            let mut sum = ComplexMatrix::zeros(self.schedule.dim());
            for c in &cylinders {
                sum = &sum + &phi_cylinder(&self.schedule, c)?;
            }
            residual = residual.max(sum.max_diff(&ComplexMatrix::identity(self.schedule.dim()))?);
        }
        Ok(CheckResult::measured(
            "additivity",
            true,
            residual,
            Comparison::AtMost,
            self.tol().additivity,
            format!("partitions of the depth-{d} words into 2, 3 and 4 cylinder sets"),
        ))
    }

    fn duality(&self) -> CheckOutcome {
        let d = self.depth();
        let mut rng = aux_rng(self.seed, 1);
        let mut residual: f64 = 0.0;
        for _ in 0..5 {
            let k = self.schedule.alphabet().len();
            let table = (0..k.pow(d as u32)).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let f = CylinderFunction::new(1, d, k, table)?;
            residual = residual.max(phi_duality_residual(&self.schedule, &self.state, &f)?);
        }
        Ok(CheckResult::measured("duality", true, residual, Comparison::AtMost, self.tol().duality, "ω(Φ(f)) = ∫ f dμ_ω for 5 random f".into()))
    }

    fn consistency(&self) -> CheckOutcome {
        let d = self.depth();
        let measure = self.measure()?;
        let mut residual: f64 = 0.0;
        for len in 0..d {
            for w in self.schedule.alphabet().words(len) {
                residual = residual.max(consistency_residual(&measure, &HistoryPrefix::initial(w))?);
            }
        }
        Ok(CheckResult::measured(
            "consistency",
            true,
            residual,
            Comparison::AtMost,
            self.tol().consistency,
            format!("all prefixes up to length {}", d.saturating_sub(1)),
        ))
    }

    fn decoherence(&self) -> CheckOutcome {
        let flag = self.measure()?.decoherence();
        Ok(CheckResult::measured(
            "decoherence",
            true,
            flag.residual,
            Comparison::AtMost,
            self.tol().decoherence,
            format!("all windows inside steps 1..={}", flag.depth),
        ))
    }

    fn homomorphism(&self) -> CheckOutcome {
        let alphabet = self.schedule.alphabet().clone();
        let k = alphabet.len();
        let max_end = self.schedule.horizon().unwrap_or(usize::MAX);
        let mut rng = aux_rng(self.seed, 2);
        let (mut product, mut commutation, mut window) = (0.0f64, 0.0f64, 0.0f64);
        let mut tested = 0;
        for _ in 0..self.pairs() {
            let delta_len = rng.gen_range(1..=2usize);
            let f_len = rng.gen_range(1..=2usize);
            let f_start = delta_len + 1 + rng.gen_range(0..2usize);
            let word: Vec<usize> = (0..delta_len).map(|_| rng.gen_range(0..k)).collect();
            let table: Vec<C64> = (0..k.pow(f_len as u32)).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            if f_start + f_len - 1 > max_end {
                continue;
            }
            let delta = CylinderFunction::indicator(&HistoryPrefix::initial(word), &alphabet)?;
            let f = CylinderFunction::new(f_start, f_start + f_len - 1, k, table)?;
            let r = phi_homomorphism_check(&self.schedule, &f, &delta, self.tol().homomorphism)?;
            product = product.max(r.product_residual);
            commutation = commutation.max(r.commutation_residual);
            window = window.max(r.window_residual);
            tested += 1;
        }
        if tested == 0 {
            return Err(histories::Error::HorizonExceeded("schedule too short for separated windows".into()));
        }
        Ok(CheckResult::measured(
            "homomorphism",
            true,
            product.max(commutation),
            Comparison::AtMost,
            self.tol().homomorphism,
            format!(
                "{tested} (f, Δ) pairs; product residual {product:e}, commutation residual {commutation:e}, full-vs-window residual {window:e}"
            ),
        ))
    }

    fn exchangeability(&self) -> CheckOutcome {
        let measure = self.measure()?;
        let mut residual: f64 = 0.0;
        for len in 1..=6 {
            for w in self.schedule.alphabet().words(len) {
                let mut sorted = w.clone();
                sorted.sort_unstable();
                let a = lsw_probability(&measure, &HistoryPrefix::initial(w))?;
                let b = lsw_probability(&measure, &HistoryPrefix::initial(sorted))?;
                residual = residual.max((a - b).abs());
            }
        }
        Ok(CheckResult::measured(
            "exchangeability",
            true,
            residual,
            Comparison::AtMost,
            0.0,
            "μ_ω(w) = μ_ω(sorted w) bit-exactly for all words of length ≤ 6".into(),
        ))
    }

    fn de_finetti(&self) -> CheckOutcome {
        let (model, state) = self.model();
        let measure = self.measure()?;
        let mut residual: f64 = 0.0;
        for len in 1..=6 {
            for w in model.alphabet().words(len) {
                let oracle = model.mixture_probability(state.weights(), &w);
                residual = residual.max((lsw_probability(&measure, &HistoryPrefix::initial(w))? - oracle).abs());
            }
        }
        Ok(CheckResult::measured(
            "de_finetti",
            true,
            residual,
            Comparison::AtMost,
            self.tol().de_finetti,
            "μ_ω against Σ_ν p_ν Π p(·|ν) on words of length ≤ 6".into(),
        ))
    }

    fn tail_depths(&self) -> Vec<usize> {
        self.config.run.tail_depths.clone().unwrap_or_else(|| vec![10, 100, 1000])
    }

    /// `Φ(χ_{label N})` against `Q_N`, and the frequency series, through the
    /// exchangeable path.
    fn tail_convergence(&self) -> histories::Result<(CheckResult, Vec<ConvergenceRow>)> {
        let (model, _) = self.model();
        let mut depths = self.tail_depths();
        depths.sort_unstable();
        depths.dedup();
        let windows: Vec<(usize, usize)> = depths.iter().enumerate().map(|(i, &d)| (i + 1, i + d)).collect();
        let top = model.n_max();
        let indicator = LabelFunction::indicator(model, top, self.tol().tail)?;
        let target = model.label_projection(top);
        let mut rows = Vec::new();
        let mut last = f64::NAN;
        for &(s, e) in &windows {
            let report = phi_tail_exchangeable(model, &indicator, &[(s, e)])?;
            last = report.operator.max_diff(target.matrix())?;
            rows.push(ConvergenceRow {
                depth: e - s + 1,
                quantity: "phi_label_indicator_error".into(),
                residual: last,
                bound: Some(classification_error_bound(e - s + 1, model.gap())),
            });
        }
        let freq = phi_tail_exchangeable(model, &SymbolFrequency { symbol: model.one_symbol(), limit_tol: self.tol().tail }, &windows)?;
        for r in &freq.records {
            rows.push(ConvergenceRow { depth: r.depth, quantity: "phi_frequency_delta".into(), residual: r.delta, bound: None });
        }
        let check = CheckResult::measured(
            "tail_convergence",
            false,
            last,
            Comparison::AtMost,
            self.tol().tail,
            format!("‖Φ(χ_{{ν={top}}}) − Q_{top}‖ at window lengths {depths:?}; frequency non-convergent: {}", freq.non_convergent),
        );
        Ok((check, rows))
    }

    fn schedule_tail_rows(&self) -> Vec<ConvergenceRow> {
        let max_end = self.schedule.horizon().unwrap_or(6).min(6);
        let windows: Vec<(usize, usize)> = (1..=3).map(|i| (i, 2 * i)).filter(|&(_, e)| e <= max_end).collect();
        if windows.is_empty() {
            return Vec::new();
        }
        match phi_tail(&self.schedule, &SymbolFrequency { symbol: 0, limit_tol: self.tol().tail }, &windows) {
            Ok(report) => report
                .records
                .iter()
                .map(|r| ConvergenceRow { depth: r.depth, quantity: "phi_frequency_delta".into(), residual: r.delta, bound: None })
                .collect(),
            Err(_) => Vec::new(),
        }
    }

    // ---------------------------------------------------------------- sample

    fn checkpoints(&self) -> Vec<usize> {
        let horizon = self.horizon();
        let mut c = self.config.run.checkpoints.clone().unwrap_or_else(|| {
            let mut v: Vec<usize> = std::iter::successors(Some(10usize), |x| x.checked_mul(10)).take_while(|&x| x < horizon).collect();
            v.push(horizon);
            v
        });
        c.retain(|&t| t <= horizon);
        c.sort_unstable();
        c.dedup();
        c
    }

    fn sample(&mut self, checks: &[String], out: &mut Vec<CheckResult>) -> Result<SuiteOutput, RunError> {
        let (model, state) = self.model().clone();
        let horizon = self.horizon();
        let count = self.trajectories();
        let checkpoints = self.checkpoints();
        let write_outcomes = self.config.run.write_outcomes.unwrap_or(true);
        let seed = self.seed;
        let started = Instant::now();
        let records: Vec<TrajectoryRecord> = (0..count as u64)
            .into_par_iter()
            .map(|j| -> histories::Result<TrajectoryRecord> {
                let t = sample_trajectory(&model, &state, horizon, seed, j)?;
                Ok(TrajectoryRecord::new(&model, &t, &checkpoints, write_outcomes))
            })
            .collect::<histories::Result<_>>()
            .context("sampling trajectories")?;
        let sampling_ms = started.elapsed().as_millis();

        let mut jsonl = String::new();
        for r in &records {
            jsonl.push_str(&serde_json::to_string(&r.line).expect("trajectory record serializes"));
            jsonl.push('\n');
        }
        let errors = records.iter().filter(|r| r.line.estimated_label != r.line.true_label).count();
        let accuracy = 1.0 - errors as f64 / count as f64;
        let (lo, hi) = wilson_interval(errors, count, 3.0);
        let bound = classification_error_bound(horizon, model.gap());
        for name in checks {
            let r = match name.as_str() {
                "purification" => timed(name, || {
                    Ok(CheckResult::measured(
                        name,
                        true,
                        errors as f64 / count as f64,
                        Comparison::AtMost,
                        bound,
                        format!("error rate with 3σ Wilson interval [{lo:e}, {hi:e}] against the Hoeffding bound 2exp(-Tγ²/2)"),
                    )
                    .with_passed(lo <= bound))
                }),
                "accuracy" => {
                    let min = self.config.run.min_accuracy.expect("checked when selecting");
                    timed(name, || Ok(CheckResult::measured(name, true, accuracy, Comparison::AtLeast, min, format!("{count} trajectories at horizon {horizon}"))))
                }
                other => unreachable!("unknown check {other}"),
            };
            out.push(r);
        }
        let mut rows = Vec::new();
        for (i, &t) in checkpoints.iter().enumerate() {
            let mis = records.iter().filter(|r| r.misclassified[i]).count() as f64 / count as f64;
            let post = records.iter().map(|r| r.posterior_error[i]).sum::<f64>() / count as f64;
            let envelope = Some(classification_error_bound(t, model.gap()));
            rows.push(ConvergenceRow { depth: t, quantity: "misclassification".into(), residual: mis, bound: envelope });
            rows.push(ConvergenceRow { depth: t, quantity: "posterior_error".into(), residual: post, bound: envelope });
        }
        let mut label_counts = vec![0usize; model.labels()];
        for r in &records {
            label_counts[r.line.true_label] += 1;
        }
        let summary = json!({
            "trajectories": count,
            "horizon": horizon,
            "accuracy": accuracy,
            "errors": errors,
            "error_wilson_3sigma": [lo, hi],
            "hoeffding_bound": bound,
            "gap": model.gap(),
            "true_label_counts": label_counts,
            "sampling_ms": sampling_ms,
        });
        Ok((summary, Some(rows), vec![("trajectories.jsonl".into(), jsonl)]))
    }

    // ---------------------------------------------------------- disintegrate

    fn disintegrate(&mut self, checks: &[String], out: &mut Vec<CheckResult>) -> Result<SuiteOutput, RunError> {
        let (model, state) = self.model().clone();
        let run = &self.config.run;
        let exact_depth = run.exact_depth.unwrap_or(6);
        let settings = EmpiricalSettings {
            depth: run.empirical_depth.unwrap_or(DEFAULT_DEPTH),
            eps_mol: run.eps_mol.unwrap_or(DEFAULT_EPS_MOL),
            burn_in: run.burn_in.unwrap_or(DEFAULT_BURN_IN),
            min_trajectories: run.min_trajectories.unwrap_or(10),
        };
        let exact = disintegrate_exact(&model, &state, exact_depth).context("exact disintegration")?;
        let wants_empirical = checks.iter().any(|c| c != "reconstruction");
        let empirical = if wants_empirical {
            let trajs = sample_many(&model, &state, self.horizon(), self.seed, self.trajectories()).context("sampling trajectories")?;
            Some(disintegrate_empirical(&model, &trajs, &settings))
        } else {
            None
        };
        let exact_at_d = disintegrate_exact(&model, &state, settings.depth).context("exact disintegration")?;
        let agreement = match &empirical {
            Some(Ok(e)) => Some(compare_disintegrations(e, &exact_at_d).context("comparing disintegrations")?),
            _ => None,
        };
        let not_run = |name: &str| {
            let why = match &empirical {
                Some(Err(e)) => format!("not run: empirical disintegration failed: {e}"),
                _ => "not run".to_string(),
            };
            CheckResult::failed(name, true, why)
        };
        for name in checks {
            let r = match name.as_str() {
                "reconstruction" => timed(name, || {
                    let measure = self.measure()?;
                    let residual = exact.reconstruction_residual(&measure)?.max(exact.normalization_residual());
                    Ok(CheckResult::measured(
                        name,
                        true,
                        residual,
                        Comparison::AtMost,
                        self.tol().reconstruction,
                        format!("Σ_ν P(ν) μ(w|ν) against μ_ω(w) for all words of length ≤ {exact_depth}"),
                    ))
                }),
                "clustering" => timed(name, || match &empirical {
                    Some(Ok(e)) => {
                        let c = &e.clustering;
                        let n = c.labels.len();
                        let min_tv = (0..n)
                            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                            .map(|(i, j)| c.tv_matrix[i][j])
                            .fold(f64::INFINITY, f64::min);
                        let residual = if n < 2 { f64::INFINITY } else { min_tv };
                        Ok(CheckResult::measured(
                            name,
                            true,
                            residual,
                            Comparison::AtLeast,
                            2.0 * c.eps_mol,
                            format!("{n} clusters of sizes {:?}, radii {:?}", c.sizes, c.within_radius),
                        ))
                    }
                    _ => Ok(not_run(name)),
                }),
                "empirical_weights" => timed(name, || match &agreement {
                    Some(a) => Ok(CheckResult::measured(
                        name,
                        true,
                        a.max_z,
                        Comparison::AtMost,
                        self.tol().weight_sigma,
                        "largest |P̂(ν) − ω(Q_ν)| in binomial standard deviations".into(),
                    )),
                    None => Ok(not_run(name)),
                }),
                "empirical_conditionals" => timed(name, || match &agreement {
                    Some(a) => Ok(CheckResult::measured(
                        name,
                        true,
                        a.max_tv,
                        Comparison::AtMost,
                        self.tol().conditional_tv,
                        format!("largest total variation at depth {}", settings.depth),
                    )),
                    None => Ok(not_run(name)),
                }),
                other => unreachable!("unknown check {other}"),
            };
            out.push(r);
        }
        #[derive(Serialize)]
        struct DisintegrationFile<'a> {
            exact: histories::ergodic::DisintegrationRecord,
            empirical: Option<histories::ergodic::DisintegrationRecord>,
            clustering: Option<ClusteringSummary<'a>>,
            agreement: Option<&'a histories::ergodic::Agreement>,
        }
        #[derive(Serialize)]
        struct ClusteringSummary<'a> {
            eps_mol: f64,
            labels: &'a [usize],
            sizes: &'a [usize],
            mean_frequencies: &'a [f64],
            within_radius: &'a [f64],
            tv_matrix: &'a [Vec<f64>],
        }
        let (emp_record, clustering, error) = match &empirical {
            Some(Ok(e)) => (
                Some(e.disintegration.to_record()),
                Some(ClusteringSummary {
                    eps_mol: e.clustering.eps_mol,
                    labels: &e.clustering.labels,
                    sizes: &e.clustering.sizes,
                    mean_frequencies: &e.clustering.mean_frequencies,
                    within_radius: &e.clustering.within_radius,
                    tv_matrix: &e.clustering.tv_matrix,
                }),
                None,
            ),
            Some(Err(e)) => (None, None, Some(e.to_string())),
            None => (None, None, None),
        };
        let file = DisintegrationFile { exact: exact.to_record(), empirical: emp_record, clustering, agreement: agreement.as_ref() };
        let text = serde_json::to_string_pretty(&file).expect("disintegration serializes") + "\n";
        let summary = json!({
            "exact_depth": exact_depth,
            "empirical": settings,
            "trajectories": if wants_empirical { Some(self.trajectories()) } else { None },
            "horizon": if wants_empirical { Some(self.horizon()) } else { None },
            "empirical_error": error,
            "agreement": agreement,
        });
        Ok((summary, None, vec![("disintegration.json".into(), text)]))
    }

    // --------------------------------------------------------- theorem checks

    fn theorem_checks(&mut self, checks: &[String], out: &mut Vec<CheckResult>) -> Result<SuiteOutput, RunError> {
        let mut rows = Vec::new();
        for name in checks {
            let r = match name.as_str() {
                "homomorphism" => timed(name, || self.homomorphism()),
                "theorem4" => timed(name, || self.theorem4()),
                "zero_one_law" => timed(name, || self.zero_one_law()),
                "zero_one_monte_carlo" => timed(name, || self.zero_one_monte_carlo()),
                "mutual_singularity" | "singularity_tv" => timed(name, || {
                    let (a, b, series) = self.singularity()?;
                    if rows.is_empty() {
                        rows = series;
                    }
                    Ok(if name == "mutual_singularity" { a } else { b })
                }),
                "extremality" => timed(name, || self.extremality()),
                "mixture_non_extremal" => timed(name, || self.mixture_non_extremal()),
                "moment_uniqueness" => timed(name, || self.moment_uniqueness()),
                other => unreachable!("unknown check {other}"),
            };
            out.push(r);
        }
        let summary = json!({ "pairs": self.pairs() });
        Ok((summary, Some(rows), Vec::new()))
    }

    fn theorem4(&self) -> CheckOutcome {
        let alphabet = self.schedule.alphabet().clone();
        let k = alphabet.len();
        let prefix_len = 3usize.min(self.schedule.horizon().map_or(3, |h| h.saturating_sub(1)));
        let max_end = self.schedule.horizon().unwrap_or(usize::MAX);
        let prefixes: Vec<HistoryPrefix> = (0..=prefix_len).flat_map(|l| alphabet.words(l)).map(HistoryPrefix::initial).collect();
        let mut rng = aux_rng(self.seed, 3);
        let mut residual: f64 = 0.0;
        let mut tested = 0;
        for _ in 0..self.pairs() {
            let omega = DensityMatrix::random(self.schedule.dim(), &mut rng);
            let start = prefix_len + 1;
            let len = rng.gen_range(1..=3usize).min(max_end.saturating_sub(start) + 1);
            if len == 0 || start > max_end {
                continue;
            }
            let table = (0..k.pow(len as u32)).map(|_| C64::new(rng.gen_range(0.0..2.0), 0.0)).collect();
            let f = CylinderFunction::new(start, start + len - 1, k, table)?;
            let report = theorem4_check(&self.schedule, &omega, &f, &prefixes, self.tol().theorem4)?;
            residual = residual.max(report.max_residual);
            tested += 1;
        }
        if tested == 0 {
            return Err(histories::Error::HorizonExceeded("schedule too short for the theorem-4 check".into()));
        }
        Ok(CheckResult::measured(
            "theorem4",
            true,
            residual,
            Comparison::AtMost,
            self.tol().theorem4,
            format!("{tested} random (ω, f) pairs, all prefixes of length ≤ {prefix_len}"),
        ))
    }

    fn zero_one_horizons(&self) -> Vec<usize> {
        self.config.run.zero_one_horizons.clone().unwrap_or_else(|| vec![10, 100, 1000, 10_000])
    }

    fn zero_one_law(&self) -> CheckOutcome {
        let (model, _) = self.model();
        let tol = self.tol().zero_one;
        let mut residual: f64 = 0.0;
        let mut passed = true;
        let mut detail = Vec::new();
        for p in self.config.predicates(model) {
            let r = zero_one_law_check(model, &p, &self.zero_one_horizons())?;
            passed &= r.passes(tol) && r.matches_limits(tol);
            for s in &r.series {
                residual = residual.max((s.estimates.last().expect("non-empty") - s.limit).abs());
                detail.push(format!("[{}, {}] ν={}: {:?}", p.lower, p.upper, s.label, s.estimates));
            }
        }
        Ok(CheckResult::measured("zero_one_law", true, residual, Comparison::AtMost, tol, detail.join("; ")).with_passed(passed))
    }

    fn zero_one_monte_carlo(&self) -> CheckOutcome {
        let (model, _) = self.model();
        let tol = self.tol().zero_one;
        let horizon = self.horizon();
        let count = self.trajectories().min(1000);
        let mut residual: f64 = 0.0;
        for (i, p) in self.config.predicates(model).iter().enumerate() {
            let exact = zero_one_law_check(model, p, &[horizon])?;
            let mc = zero_one_law_monte_carlo(model, p, horizon, count, self.seed.wrapping_add(1000 * i as u64))?;
            for (est, s) in mc.iter().zip(&exact.series) {
                residual = residual.max((est - s.limit).abs());
            }
        }
        Ok(CheckResult::measured(
            "zero_one_monte_carlo",
            false,
            residual,
            Comparison::AtMost,
            tol,
            format!("{count} sampled trajectories per label at horizon {horizon}"),
        ))
    }

    fn singularity(&self) -> histories::Result<(CheckResult, CheckResult, Vec<ConvergenceRow>)> {
        let (model, _) = self.model();
        let depths = self.config.run.singularity_depths.clone().unwrap_or_else(|| vec![1, 5, 10, 20, 60, 200]);
        let report = mutual_singularity_check(model, &depths, false)?;
        let mut rows = Vec::new();
        let mut violation: f64 = 0.0;
        for pair in &report.pairs {
            for ((&d, &tv), &h) in pair.depths.iter().zip(&pair.tv).zip(&pair.hellinger_bound) {
                rows.push(ConvergenceRow { depth: d, quantity: format!("tv_{}_{}", pair.first, pair.second), residual: tv, bound: Some(h) });
                violation = violation.max(h - tv);
            }
            if !pair.nondecreasing {
                violation = violation.max(1.0);
            }
        }
        let deepest = *depths.iter().max().expect("non-empty");
        let monotone = CheckResult::measured(
            "mutual_singularity",
            true,
            violation.max(0.0),
            Comparison::AtMost,
            1e-12,
            "total variation nondecreasing in depth and above the Hellinger lower bound".into(),
        );
        let threshold = CheckResult::measured(
            "singularity_tv",
            true,
            report.min_final_tv(),
            Comparison::AtLeast,
            self.tol().singularity_tv,
            format!("smallest pairwise total variation at depth {deepest}"),
        );
        Ok((monotone, threshold, rows))
    }

    fn extremality_depth(&self) -> usize {
        self.config.run.extremality_depth.unwrap_or(4)
    }

    fn extremality(&self) -> CheckOutcome {
        let (model, state) = self.model();
        let d = disintegrate_exact(model, state, self.extremality_depth())?;
        let reports = extremality_by_label(&d, self.tol().extremality)?;
        let residual = reports.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
        let per: Vec<String> = reports.iter().enumerate().map(|(i, r)| format!("ν={i}: {:e}", r.residual)).collect();
        Ok(CheckResult::measured("extremality", true, residual, Comparison::AtLeast, self.tol().extremality, per.join(", ")))
    }

    fn mixture_non_extremal(&self) -> CheckOutcome {
        let (model, state) = self.model();
        let d = disintegrate_exact(model, state, self.extremality_depth())?;
        let family: Vec<&[f64]> = (0..d.labels().len()).map(|i| d.table(i)).collect();
        let r = extremality_check(&d.mixture_table(), &family, self.tol().extremality)?;
        let mixed = state.weights().iter().filter(|&&w| w > 0.0).count() > 1;
        let comparison = if mixed { Comparison::AtMost } else { Comparison::AtLeast };
        let expectation = if mixed { "a nontrivial mixture" } else { "a single conditional" };
        Ok(CheckResult::measured(
            "mixture_non_extremal",
            true,
            r.residual,
            comparison,
            self.tol().extremality,
            format!("μ_ω is {expectation}; best simplex coefficients {:?}", r.coefficients),
        ))
    }

    fn moment_uniqueness(&self) -> CheckOutcome {
        let (model, state) = self.model();
        let moments = moments_from_measure(model, &self.measure()?)?;
        let r = moment_uniqueness(model, &moments)?;
        let err = r.weights.iter().zip(state.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(CheckResult::measured(
            "moment_uniqueness",
            true,
            err,
            Comparison::AtMost,
            self.tol().moments,
            format!("weights from μ_ω(1^k), k ≤ N; condition number {:e}", r.condition_number),
        ))
    }
}

/// One line of `trajectories.jsonl`.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryLine {
    pub index: u64,
    pub stream: u64,
    pub true_label: usize,
    pub horizon: usize,
    pub ones: usize,
    pub frequency: f64,
    pub estimated_label: usize,
    pub margin: f64,
    pub final_posterior: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<String>,
}

struct TrajectoryRecord {
    line: TrajectoryLine,
    misclassified: Vec<bool>,
    posterior_error: Vec<f64>,
}

impl TrajectoryRecord {
    fn new(model: &NdmModel, t: &histories::ndm::Trajectory, checkpoints: &[usize], write_outcomes: bool) -> Self {
        let one = model.one_symbol();
        let ones = t.outcomes.iter().filter(|&&s| s == one).count();
        let frequency = ones as f64 / t.horizon() as f64;
        let (estimated_label, margin) = classify_frequency(model, frequency);
        let mut misclassified = Vec::with_capacity(checkpoints.len());
        let mut posterior_error = Vec::with_capacity(checkpoints.len());
        for &c in checkpoints {
            let hits = t.outcomes[..c].iter().filter(|&&s| s == one).count();
            misclassified.push(classify_frequency(model, hits as f64 / c as f64).0 != t.true_label);
            posterior_error.push(1.0 - t.posterior_at(model, c)[t.true_label]);
        }
        let line = TrajectoryLine {
            index: t.stream,
            stream: t.stream,
            true_label: t.true_label,
            horizon: t.horizon(),
            ones,
            frequency,
            estimated_label,
            margin,
            final_posterior: t.final_posterior(model),
            outcomes: write_outcomes.then(|| model.alphabet().format_word(&t.outcomes)),
        };
        Self { line, misclassified, posterior_error }
    }
}
