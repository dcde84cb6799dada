//! The label/probe reference model of a non-demolition measurement.
//!
//! A conserved label `ν ∈ {0, …, N}` (an electron number, a photon number)
//! is probed by a stream of independent probes. Each probe yields an outcome
//! `ξ` with law `p(ξ|ν)`, so the history measure of a state with label
//! weights `p_ν = ω(Q_ν)` is the mixture of product measures
//! `μ_ω = Σ_ν p_ν Π_i p(ξ_i|ν)`.
//!
//! Two schedules realize the model:
//!
//! - [`Representation::Tensor`]: the label space tensored with one probe
//!   register per step; step `i` measures probe `i` in a label-dependent
//!   basis. These are genuine commuting projections, limited to short
//!   horizons.
//! - [`Representation::Block`]: the same schedule with the probes traced out
//!   against their initial state, leaving the diagonal Kraus operators
//!   `K_ξ = Σ_ν √p(ξ|ν) Q_ν` on the label space, valid at every horizon.
//!
//! # Random streams
//!
//! Trajectory `j` of a run with top-level seed `s` is drawn from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `j`. It consumes one
//! uniform `f64` for its label and then one per outcome, in time order.
//! The mapping depends on nothing else, so trajectories can be sampled in
//! any order or on any number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alphabet::{Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::history::MeasurementSchedule;
use crate::operator::{tol, ComplexMatrix, DensityMatrix, Instrument, Projection, C64};
use crate::povm::{ConvergenceRecord, TailFunctional, TailReport};
use crate::stats::{composition_count, compositions, ln_factorials, ln_multinomial_probability};

/// Explicit tensor schedules are refused beyond this many probe steps.
pub const MAX_TENSOR_HORIZON: usize = 6;

/// Explicit tensor schedules are refused beyond this Hilbert-space dimension.
pub const MAX_TENSOR_DIM: usize = 1024;

const LAW_TOL: f64 = 1e-12;

/// The reference model: labels `0..=N`, an outcome law per label, and the
/// size of each label's block in the system Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct NdmModel {
    alphabet: Alphabet,
    law: Vec<Vec<f64>>,
    block_dims: Vec<usize>,
    one: Symbol,
    gap: f64,
}

impl NdmModel {
    /// `law[ν][ξ] = p(ξ|ν)` in alphabet order. `one` is the symbol whose
    /// frequency identifies the label.
    pub fn new(alphabet: Alphabet, law: Vec<Vec<f64>>, block_dims: Vec<usize>, one: Symbol) -> Result<Self> {
        if law.is_empty() {
            return Err(Error::InvalidModel("at least one label is required".into()));
        }
        if one >= alphabet.len() {
            return Err(Error::InvalidModel(format!("frequency symbol #{one} not in alphabet")));
        }
        if block_dims.len() != law.len() || block_dims.contains(&0) {
            return Err(Error::InvalidModel("one positive block dimension per label is required".into()));
        }
        for (nu, row) in law.iter().enumerate() {
            if row.len() != alphabet.len() {
                return Err(Error::InvalidModel(format!("row {nu} has {} entries", row.len())));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidModel(format!("row {nu} has entries outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > LAW_TOL {
                return Err(Error::InvalidModel(format!("row {nu} sums to {total}")));
            }
        }
        let mut p1: Vec<f64> = law.iter().map(|row| row[one]).collect();
        p1.sort_by(f64::total_cmp);
        let gap = p1.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if gap <= LAW_TOL {
            return Err(Error::InvalidModel("p(1|ν) does not separate the labels".into()));
        }
        Ok(Self { alphabet, law, block_dims, one, gap })
    }

    /// Two-outcome model on `{-1, 1}` with the given `p(1|ν)`.
    pub fn binary(p_one: &[f64]) -> Result<Self> {
        let law = p_one.iter().map(|&p| vec![1.0 - p, p]).collect();
        Self::new(Alphabet::plus_minus(), law, vec![1; p_one.len()], 1)
    }

    /// Default law `p(1|ν) = (ν + 1)/(N + 2)`.
    pub fn default_law(n_max: usize) -> Self {
        let p: Vec<f64> = (0..=n_max).map(|nu| (nu as f64 + 1.0) / (n_max as f64 + 2.0)).collect();
        Self::binary(&p).expect("default law is separating")
    }

    pub fn with_block_dims(mut self, block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.len() != self.law.len() || block_dims.contains(&0) {
            return Err(Error::InvalidModel("one positive block dimension per label is required".into()));
        }
        self.block_dims = block_dims;
        Ok(self)
    }

    /// Largest label `N`.
    pub fn n_max(&self) -> usize {
        self.law.len() - 1
    }

    pub fn labels(&self) -> usize {
        self.law.len()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn law(&self) -> &[Vec<f64>] {
        &self.law
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// The symbol whose frequency is the label estimator.
    pub fn one_symbol(&self) -> Symbol {
        self.one
    }

    /// `p(ξ|ν)`.
    pub fn p(&self, symbol: Symbol, label: usize) -> f64 {
        self.law[label][symbol]
    }

    /// `p(1|ν)`.
    pub fn p_one(&self, label: usize) -> f64 {
        self.law[label][self.one]
    }

    /// Minimal separation `γ` between distinct `p(1|ν)`.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn system_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    fn block_range(&self, label: usize) -> std::ops::Range<usize> {
        let start: usize = self.block_dims[..label].iter().sum();
        start..start + self.block_dims[label]
    }

    /// The spectral projection `Q_ν` of the label operator.
    pub fn label_projection(&self, label: usize) -> Projection {
        let mut diag = vec![0.0; self.system_dim()];
        for i in self.block_range(label) {
            diag[i] = 1.0;
        }
        Projection::new(ComplexMatrix::from_real_diagonal(&diag)).expect("diagonal 0/1 matrix is a projection")
    }

    /// `Σ_ν c_ν Q_ν`.
    pub fn label_function(&self, values: &[C64]) -> ComplexMatrix {
        let n = self.system_dim();
        let mut m = nalgebra::DMatrix::<C64>::zeros(n, n);
        for (label, &v) in values.iter().enumerate() {
            for i in self.block_range(label) {
                m[(i, i)] = v;
            }
        }
        ComplexMatrix::from_inner(m).expect("square")
    }

    /// `μ_ω(w) = Σ_ν p_ν Π_i p(w_i|ν)`, accumulated in label order.
    pub fn mixture_probability(&self, weights: &[f64], word: &[Symbol]) -> f64 {
        (0..self.labels()).map(|nu| weights[nu] * self.product_probability(nu, word)).sum()
    }

    /// `μ(w|ν) = Π_i p(w_i|ν)`, multiplied in time order.
    pub fn product_probability(&self, label: usize, word: &[Symbol]) -> f64 {
        word.iter().fold(1.0, |acc, &s| acc * self.law[label][s])
    }
}

/// Which schedule [`build_schedule`] produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// Probes traced out; unbounded horizon on the label space.
    Block,
    /// Label space ⊗ one probe register per step, up to the given horizon.
    Tensor { horizon: usize },
}

/// Realizes the model as a measurement schedule.
pub fn build_schedule(model: &NdmModel, representation: Representation) -> Result<MeasurementSchedule> {
    match representation {
        Representation::Block => block_schedule(model),
        Representation::Tensor { horizon } => tensor_schedule(model, horizon),
    }
}

fn block_schedule(model: &NdmModel) -> Result<MeasurementSchedule> {
    let ops = (0..model.alphabet.len())
        .map(|s| {
            let amps: Vec<C64> = (0..model.labels()).map(|nu| C64::new(model.p(s, nu).sqrt(), 0.0)).collect();
            model.label_function(&amps)
        })
        .collect();
    MeasurementSchedule::stationary_kraus(model.alphabet.clone(), ops)
}

/// Real orthogonal matrix whose column 0 is the unit vector `v`
/// (a Householder reflection of `e_0` onto `v`).
fn probe_basis(v: &[f64]) -> Vec<Vec<f64>> {
    let k = v.len();
    let mut u: Vec<f64> = v.iter().map(|x| -x).collect();
    u[0] += 1.0;
    let norm2: f64 = u.iter().map(|x| x * x).sum();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    if norm2 < 1e-300 {
                        id
                    } else {
                        id - 2.0 * u[i] * u[j] / norm2
                    }
                })
                .collect()
        })
        .collect()
}

fn tensor_schedule(model: &NdmModel, horizon: usize) -> Result<MeasurementSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("tensor horizon must be at least 1".into()));
    }
    let k = model.alphabet.len();
    let probe_dim = k.checked_pow(horizon as u32).unwrap_or(usize::MAX);
    let dim = probe_dim.saturating_mul(model.system_dim());
    if horizon > MAX_TENSOR_HORIZON || dim > MAX_TENSOR_DIM {
        return Err(Error::HorizonExceeded(format!(
            "tensor schedule with {horizon} probes has dimension {dim} (limits: {MAX_TENSOR_HORIZON} probes, dimension {MAX_TENSOR_DIM})"
        )));
    }
    // φ_{ν,ξ} = row ξ of the reflection taking e_0 to (√p(ξ|ν))_ξ, so that
    // |⟨φ_{ν,ξ}|0⟩|² = p(ξ|ν).
    let bases: Vec<Vec<Vec<f64>>> = (0..model.labels())
        .map(|nu| probe_basis(&(0..k).map(|s| model.p(s, nu).sqrt()).collect::<Vec<_>>()))
        .collect();
    let mut instruments = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let before = ComplexMatrix::identity(k.pow(step as u32));
        let after = ComplexMatrix::identity(k.pow((horizon - step - 1) as u32));
        let mut projections = Vec::with_capacity(k);
        for symbol in 0..k {
            let mut acc = ComplexMatrix::zeros(dim);
            for (nu, basis) in bases.iter().enumerate() {
                let phi: Vec<C64> = basis[symbol].iter().map(|&x| C64::new(x, 0.0)).collect();
                let probe = ComplexMatrix::outer(&phi);
                let term = model.label_projection(nu).matrix().kron(&before.kron(&probe).kron(&after));
                acc = &acc + &term;
            }
            projections.push(Projection::new(acc.hermitian_part())?);
        }
        instruments.push(Instrument::new(model.alphabet.clone(), projections)?);
    }
    MeasurementSchedule::finite(instruments)
}

/// `ρ ⊗ |0…0⟩⟨0…0|`: a system state with every probe of a tensor schedule
/// in its initial state.
pub fn with_probe_vacuum(model: &NdmModel, horizon: usize, state: &DensityMatrix) -> Result<DensityMatrix> {
    let probes = model.alphabet.len().pow(horizon as u32);
    let mut vac = vec![0.0; probes];
    vac[0] = 1.0;
    DensityMatrix::new(state.matrix().kron(&ComplexMatrix::from_real_diagonal(&vac)))
}

/// `⟨0…0| A |0…0⟩` over the probes: the system operator seen by states whose
/// probes are in their initial state.
pub fn compress_to_system(model: &NdmModel, horizon: usize, operator: &ComplexMatrix) -> Result<ComplexMatrix> {
    let probes = model.alphabet.len().pow(horizon as u32);
    let sys = model.system_dim();
    if operator.dim() != sys * probes {
        return Err(Error::DimensionMismatch { expected: sys * probes, found: operator.dim() });
    }
    let m = nalgebra::DMatrix::from_fn(sys, sys, |i, j| operator.get(i * probes, j * probes));
    ComplexMatrix::from_inner(m)
}

/// Label weights `p_ν(ω) = ω(Q_ν)` and optional within-block states.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    weights: Vec<f64>,
    block_states: Option<Vec<DensityMatrix>>,
}

impl MixtureState {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > LAW_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(Self { weights, block_states: None })
    }

    pub fn point_mass(labels: usize, label: usize) -> Result<Self> {
        if label >= labels {
            return Err(Error::InvalidWeights(format!("label {label} out of range")));
        }
        let mut w = vec![0.0; labels];
        w[label] = 1.0;
        Self::new(w)
    }

    pub fn uniform(labels: usize) -> Self {
        Self { weights: vec![1.0 / labels as f64; labels], block_states: None }
    }

    pub fn with_block_states(mut self, states: Vec<DensityMatrix>) -> Result<Self> {
        if states.len() != self.weights.len() {
            return Err(Error::InvalidWeights("one block state per label is required".into()));
        }
        self.block_states = Some(states);
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn block_states(&self) -> Option<&[DensityMatrix]> {
        self.block_states.as_deref()
    }

    fn check(&self, model: &NdmModel) -> Result<()> {
        if self.weights.len() != model.labels() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} labels",
                self.weights.len(),
                model.labels()
            )));
        }
        if let Some(states) = &self.block_states {
            for (nu, s) in states.iter().enumerate() {
                if s.dim() != model.block_dims[nu] {
                    return Err(Error::DimensionMismatch { expected: model.block_dims[nu], found: s.dim() });
                }
            }
        }
        Ok(())
    }

    /// Normalized state `ω_ν` within block `ν` (maximally mixed by default).
    pub fn block_state(&self, model: &NdmModel, label: usize) -> DensityMatrix {
        match &self.block_states {
            Some(states) => states[label].clone(),
            None => DensityMatrix::maximally_mixed(model.block_dims[label]),
        }
    }

    /// The block-diagonal density matrix `⊕_ν p_ν ω_ν` on the system space.
    pub fn density(&self, model: &NdmModel) -> Result<DensityMatrix> {
        self.check(model)?;
        let n = model.system_dim();
        let mut m = nalgebra::DMatrix::<C64>::zeros(n, n);
        for nu in 0..model.labels() {
            let block = self.block_state(model, nu);
            let r = model.block_range(nu);
            for (a, i) in r.clone().enumerate() {
                for (b, j) in r.clone().enumerate() {
                    m[(i, j)] = block.matrix().get(a, b) * self.weights[nu];
                }
            }
        }
        DensityMatrix::new(ComplexMatrix::from_inner(m)?)
    }
}

/// A sampled measurement history. The Bayesian posterior is a function of
/// the prior and the outcome counts, so it is recomputed on demand rather
/// than stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub stream: u64,
    pub true_label: usize,
    pub outcomes: Vec<Symbol>,
    pub prior: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.outcomes.len()
    }

    fn log_prior(&self) -> Vec<f64> {
        self.prior.iter().map(|w| w.ln()).collect()
    }

    /// `π_t(ν) ∝ p_ν Π_{i≤t} p(ξ_i|ν)`, accumulated in the log domain.
    pub fn posterior_at(&self, model: &NdmModel, t: usize) -> Vec<f64> {
        let mut counts = vec![0usize; model.alphabet.len()];
        for &s in &self.outcomes[..t.min(self.outcomes.len())] {
            counts[s] += 1;
        }
        let mut log_post = self.log_prior();
        for (nu, lp) in log_post.iter_mut().enumerate() {
            for (s, &c) in counts.iter().enumerate() {
                if c > 0 {
                    *lp += c as f64 * model.law[nu][s].ln();
                }
            }
        }
        normalize_log(&log_post)
    }

    pub fn final_posterior(&self, model: &NdmModel) -> Vec<f64> {
        self.posterior_at(model, self.horizon())
    }

    /// `π_0, π_1, …, π_T`, updated one outcome at a time.
    pub fn posterior_path(&self, model: &NdmModel) -> Vec<Vec<f64>> {
        let log_law: Vec<Vec<f64>> = model.law.iter().map(|row| row.iter().map(|p| p.ln()).collect()).collect();
        let mut log_post = self.log_prior();
        let mut path = Vec::with_capacity(self.horizon() + 1);
        path.push(normalize_log(&log_post));
        for &s in &self.outcomes {
            for (nu, lp) in log_post.iter_mut().enumerate() {
                *lp += log_law[nu][s];
            }
            path.push(normalize_log(&log_post));
        }
        path
    }
}

/// Log-domain normalization of unnormalized log weights.
fn normalize_log(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![f64::NAN; log_w.len()];
    }
    let exps: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// The random stream for trajectory `stream` of a run seeded with `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(cumulative: &[f64], u: f64) -> usize {
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Samples `ν` from the label weights, then `horizon` i.i.d. outcomes from
/// `p(·|ν)`.
pub fn sample_trajectory(model: &NdmModel, state: &MixtureState, horizon: usize, seed: u64, stream: u64) -> Result<Trajectory> {
    state.check(model)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut rng = trajectory_rng(seed, stream);
    let true_label = draw(&cumulative(&state.weights), rng.gen::<f64>());
    // Skip zero-weight labels that a rounding-level cumulative sum could hit.
    let true_label = if state.weights[true_label] > 0.0 {
        true_label
    } else {
        state.weights.iter().rposition(|&w| w > 0.0).expect("weights sum to one")
    };
    let law = cumulative(&model.law[true_label]);
    let outcomes = (0..horizon).map(|_| draw(&law, rng.gen::<f64>())).collect();
    Ok(Trajectory { seed, stream, true_label, outcomes, prior: state.weights.clone() })
}

/// Samples trajectories `0..count` in parallel; the result is in stream
/// order and independent of the thread count.
pub fn sample_many(model: &NdmModel, state: &MixtureState, horizon: usize, seed: u64, count: usize) -> Result<Vec<Trajectory>> {
    (0..count as u64)
        .into_par_iter()
        .map(|j| sample_trajectory(model, state, horizon, seed, j))
        .collect()
}

/// One Bayesian update `π ↦ π(·|ξ)`.
pub fn posterior_update(model: &NdmModel, prior: &[f64], symbol: Symbol) -> Vec<f64> {
    let unnorm: Vec<f64> = prior.iter().enumerate().map(|(nu, &p)| p * model.p(symbol, nu)).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|x| x / total).collect()
}

/// Predictive law of the next outcome, `Σ_ν π(ν) p(ξ|ν)`.
pub fn predictive(model: &NdmModel, posterior: &[f64]) -> Vec<f64> {
    (0..model.alphabet.len())
        .map(|s| posterior.iter().enumerate().map(|(nu, &p)| p * model.p(s, nu)).sum())
        .collect()
}

/// Fraction of outcomes equal to `symbol`.
pub fn frequency_estimator(outcomes: &[Symbol], symbol: Symbol) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(outcomes.iter().filter(|&&s| s == symbol).count() as f64 / outcomes.len() as f64)
}

/// Distances closer than this count as ties.
const TIE_TOL: f64 = 1e-12;

/// Label whose `p(1|ν)` is nearest to a frequency, and the margin to the
/// runner-up. Ties go to the smaller label.
pub fn classify_frequency(model: &NdmModel, frequency: f64) -> (usize, f64) {
    let mut dist: Vec<(usize, f64)> = (0..model.labels()).map(|nu| (nu, (frequency - model.p_one(nu)).abs())).collect();
    let (best, d1) = dist
        .iter()
        .copied()
        .fold((usize::MAX, f64::INFINITY), |acc, (nu, d)| if d < acc.1 - TIE_TOL { (nu, d) } else { acc });
    dist.retain(|&(nu, _)| nu != best);
    let d2 = dist.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
    let margin = if d2.is_finite() { (d2 - d1).max(0.0) } else { f64::INFINITY };
    (best, if margin < TIE_TOL { 0.0 } else { margin })
}

/// [`classify_frequency`] applied to the frequency of the model's symbol `1`.
pub fn classify_label(model: &NdmModel, outcomes: &[Symbol]) -> Result<(usize, f64)> {
    let freq = frequency_estimator(outcomes, model.one)?;
    Ok(classify_frequency(model, freq))
}

/// One term `f_ν ω_ν` of `Φ(f)^*(ω) = Σ_ν f_ν ω_ν`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionTerm {
    pub label: usize,
    pub value: f64,
    /// `p_ν(ω)`.
    pub weight: f64,
    /// Normalized block state; `None` when `p_ν = 0`.
    pub state: Option<DensityMatrix>,
}

/// Decomposes `Φ(f)^*(ω)` for a tail function `f = Σ_ν f_ν χ_{Ξ_ν}`.
pub fn state_decomposition(model: &NdmModel, state: &MixtureState, values: &[f64]) -> Result<Vec<DecompositionTerm>> {
    state.check(model)?;
    if values.len() != model.labels() {
        return Err(Error::InvalidArgument(format!("{} values for {} labels", values.len(), model.labels())));
    }
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeFunctional("values must be finite and nonnegative".into()));
    }
    let rho = state.density(model)?;
    (0..model.labels())
        .map(|nu| {
            let weight = state.weights[nu];
            let q = model.label_projection(nu);
            let block = if weight > tol::NULL {
                let m = &(q.matrix() * rho.matrix()) * q.matrix();
                Some(DensityMatrix::new(m.scale_real(1.0 / weight).hermitian_part())?)
            } else {
                None
            };
            Ok(DecompositionTerm { label: nu, value: values[nu], weight, state: block })
        })
        .collect()
}

/// `Σ_ν f_ν p_ν ω_ν` as an unnormalized density matrix.
pub fn reassemble(model: &NdmModel, terms: &[DecompositionTerm]) -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(model.system_dim());
    for t in terms {
        if let Some(s) = &t.state {
            acc = &acc + &s.matrix().scale_real(t.value * t.weight);
        }
    }
    acc
}

/// Truncation of `f = Σ_ν f_ν χ_{Ξ_ν}`: the window word is assigned to the
/// label its frequency classifies to.
#[derive(Clone, Debug)]
pub struct LabelFunction {
    model: NdmModel,
    values: Vec<C64>,
    limit_tol: f64,
}

impl LabelFunction {
    pub fn new(model: &NdmModel, values: Vec<C64>, limit_tol: f64) -> Result<Self> {
        if values.len() != model.labels() {
            return Err(Error::InvalidArgument(format!("{} values for {} labels", values.len(), model.labels())));
        }
        Ok(Self { model: model.clone(), values, limit_tol })
    }

    /// `χ_{Ξ_ν}`.
    pub fn indicator(model: &NdmModel, label: usize, limit_tol: f64) -> Result<Self> {
        let values = (0..model.labels()).map(|nu| C64::new(if nu == label { 1.0 } else { 0.0 }, 0.0)).collect();
        Self::new(model, values, limit_tol)
    }
}

impl TailFunctional for LabelFunction {
    fn evaluate(&self, w: &[Symbol]) -> C64 {
        let hits = w.iter().filter(|&&s| s == self.model.one).count();
        self.values[classify_frequency(&self.model, hits as f64 / w.len() as f64).0]
    }

    fn evaluate_counts(&self, counts: &[usize]) -> Option<C64> {
        let total: usize = counts.iter().sum();
        Some(self.values[classify_frequency(&self.model, counts[self.model.one] as f64 / total as f64).0])
    }

    fn declared_limit_tol(&self) -> f64 {
        self.limit_tol
    }
}

/// Largest number of count vectors [`phi_exchangeable`] will visit.
pub const MAX_COMPOSITIONS: usize = 1 << 22;

/// `Φ(f)` for a permutation-invariant truncation on a window of `depth`
/// steps, by the block formula
/// `Φ(f) = Σ_ν (Σ_counts multinomial(counts | p(·|ν)) f(counts)) Q_ν`.
///
/// This is independent of the word enumeration behind
/// [`crate::povm::phi_cylinder`] and reaches depths far beyond it.
pub fn phi_exchangeable(model: &NdmModel, f: &dyn TailFunctional, depth: usize) -> Result<ComplexMatrix> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let k = model.alphabet.len();
    if !composition_count(depth, k).is_some_and(|c| c <= MAX_COMPOSITIONS) {
        return Err(Error::HorizonExceeded(format!("too many count vectors at depth {depth}")));
    }
    let ln_fact = ln_factorials(depth);
    let classes = compositions(depth, k);
    let mut values = Vec::with_capacity(classes.len());
    for counts in &classes {
        values.push(f.evaluate_counts(counts).ok_or_else(|| {
            Error::InvalidArgument("functional is not a function of symbol counts".into())
        })?);
    }
    let per_label: Vec<C64> = (0..model.labels())
        .map(|nu| {
            classes
                .iter()
                .zip(&values)
                .map(|(counts, &v)| v * ln_multinomial_probability(counts, &model.law[nu], &ln_fact).exp())
                .sum()
        })
        .collect();
    Ok(model.label_function(&per_label))
}

/// [`crate::povm::phi_tail`] through [`phi_exchangeable`]: the window
/// positions do not matter for exchangeable measures, only their lengths.
pub fn phi_tail_exchangeable(model: &NdmModel, f: &dyn TailFunctional, windows: &[(usize, usize)]) -> Result<TailReport> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty depth schedule".into()));
    }
    let mut records = Vec::with_capacity(windows.len());
    let mut previous: Option<ComplexMatrix> = None;
    for (idx, &(start, end)) in windows.iter().enumerate() {
        if start == 0 || end < start {
            return Err(Error::InvalidArgument(format!("bad window ({start}, {end})")));
        }
        if idx > 0 {
            let (i0, j0) = windows[idx - 1];
            if start <= i0 || end <= j0 {
                return Err(Error::InvalidArgument("windows must increase strictly".into()));
            }
        }
        let op = phi_exchangeable(model, f, end - start + 1)?;
        let delta = match &previous {
            Some(p) => op.max_diff(p)?,
            None => 0.0,
        };
        let checksum = op.inner().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        records.push(ConvergenceRecord { depth: end - start + 1, window: (start, end), delta, operator_checksum: checksum });
        previous = Some(op);
    }
    let last_delta = records.last().map_or(0.0, |r| r.delta);
    Ok(TailReport {
        operator: previous.expect("windows is non-empty"),
        non_convergent: records.len() > 1 && last_delta > f.declared_limit_tol(),
        records,
        decoherence_residual: 0.0,
    })
}
