//! The map `Φ` from bounded functions on history space to operators.
//!
//! For a function depending on the outcomes up to step `n`,
//! `Φ(f) = Σ_ξ f(ξ) Π_{ξ^(n)} (Π_{ξ^(n)})*`, so that `ω(Φ(f)) = ∫ f dμ_ω`.
//! Functions measurable at infinity are reached through truncations on
//! windows that move off to infinity ([`phi_tail`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::history::{
    decoherence_residual, for_each_word_operator, prefix_effect, CylinderFunction, HistoryPrefix,
    MeasurementSchedule, DEFAULT_MAX_WINDOW,
};
use crate::operator::{commutator_norm, tol, ComplexMatrix, DensityMatrix, C64};

/// `Σ_w weight(w) Π_w Π_w*` over the words occupying steps
/// `start..start + length`.
///
/// The word tree is split by its first symbol and the partial sums are added
/// in symbol order, so the result does not depend on the thread count.
fn weighted_effect_sum<W>(schedule: &MeasurementSchedule, start: usize, length: usize, weight: W) -> Result<ComplexMatrix>
where
    W: Fn(&[Symbol]) -> C64 + Sync,
{
    if length == 0 {
        return Ok(ComplexMatrix::identity(schedule.dim()).scale(weight(&[])));
    }
    let k = schedule.alphabet().len();
    let partials: Vec<Result<ComplexMatrix>> = (0..k)
        .into_par_iter()
        .map(|first| {
            let head = schedule.step_operator(start, first)?;
            let mut acc = ComplexMatrix::zeros(schedule.dim());
            let mut word = vec![first];
            for_each_word_operator(schedule, start + 1, length - 1, |tail, op| {
                word.truncate(1);
                word.extend_from_slice(tail);
                let w = weight(&word);
                if w != C64::new(0.0, 0.0) {
                    let full = head * op;
                    acc.axpy(w, &(&full * &full.adjoint()));
                }
                Ok(())
            })?;
            Ok(acc)
        })
        .collect();
    let mut total = ComplexMatrix::zeros(schedule.dim());
    for p in partials {
        total = &total + &p?;
    }
    Ok(total)
}

/// `Φ(f)` for a cylinder function on the window `(m, n)`, summing over all
/// words of length `n` from the first step.
pub fn phi_cylinder(schedule: &MeasurementSchedule, f: &CylinderFunction) -> Result<ComplexMatrix> {
    check_alphabet(schedule, f)?;
    let offset = f.start() - 1;
    weighted_effect_sum(schedule, 1, f.end(), |w| f.eval(&w[offset..]))
}

/// `Σ_{ξ^(m,n)} f(ξ^(m,n)) Π_{ξ^(m,n)} (Π_{ξ^(m,n)})*`, the window-local
/// form of `Φ(f)`. It agrees with [`phi_cylinder`] whenever the schedule
/// decoheres on `1..=n`.
pub fn phi_window(schedule: &MeasurementSchedule, f: &CylinderFunction) -> Result<ComplexMatrix> {
    check_alphabet(schedule, f)?;
    weighted_effect_sum(schedule, f.start(), f.end() - f.start() + 1, |w| f.eval(w))
}

fn check_alphabet(schedule: &MeasurementSchedule, f: &CylinderFunction) -> Result<()> {
    if f.alphabet_len() != schedule.alphabet().len() {
        return Err(Error::InvalidAlphabet(format!(
            "function tabulated over {} symbols, schedule has {}",
            f.alphabet_len(),
            schedule.alphabet().len()
        )));
    }
    Ok(())
}

/// `|ω(Φ(f)) − Σ_w f(w) μ_ω(w)|`. The right side evaluates every word's
/// probability from its own history operator, independently of the
/// enumeration used by [`phi_cylinder`].
pub fn phi_duality_residual(schedule: &MeasurementSchedule, state: &DensityMatrix, f: &CylinderFunction) -> Result<f64> {
    let lhs = state.expectation(&phi_cylinder(schedule, f)?)?;
    let offset = f.start() - 1;
    let mut rhs = C64::new(0.0, 0.0);
    for word in schedule.alphabet().words(f.end()) {
        let value = f.eval(&word[offset..]);
        if value == C64::new(0.0, 0.0) {
            continue;
        }
        let effect = prefix_effect(schedule, &HistoryPrefix::initial(word))?;
        rhs += value * state.expectation(&effect)?.re;
    }
    Ok((lhs - rhs).norm())
}

pub fn phi_duality_check(schedule: &MeasurementSchedule, state: &DensityMatrix, f: &CylinderFunction, tol: f64) -> Result<bool> {
    Ok(phi_duality_residual(schedule, state, f)? <= tol)
}

/// `‖Φ(∪ Δ_n) − Σ Φ(Δ_n)‖_max` for pairwise disjoint cylinder indicators.
pub fn phi_sigma_additivity_residual(schedule: &MeasurementSchedule, parts: &[CylinderFunction]) -> Result<f64> {
    if parts.is_empty() {
        // Φ(∅) is the zero operator and so is the empty sum.
        return Ok(0.0);
    }
    let start = parts.iter().map(|p| p.start()).min().unwrap_or(1);
    let end = parts.iter().map(|p| p.end()).max().unwrap_or(1);
    let wide: Vec<CylinderFunction> = parts.iter().map(|p| p.extend_to(start, end)).collect::<Result<_>>()?;
    let k = schedule.alphabet().len();
    let mut union = vec![C64::new(0.0, 0.0); wide[0].table().len()];
    for (idx, part) in wide.iter().enumerate() {
        if !part.table().iter().all(|z| *z == C64::new(0.0, 0.0) || *z == C64::new(1.0, 0.0)) {
            return Err(Error::InvalidArgument(format!("part {idx} is not an indicator")));
        }
        for (rank, value) in part.table().iter().enumerate() {
            if value.re == 1.0 && union[rank].re == 1.0 {
                let word = word_at(rank, start, end, k);
                return Err(Error::OverlapDetected { word: schedule.alphabet().format_word(&word) });
            }
            union[rank] += value;
        }
    }
    let union = CylinderFunction::new(start, end, k, union)?;
    let mut sum = ComplexMatrix::zeros(schedule.dim());
    for part in parts {
        sum = &sum + &phi_cylinder(schedule, part)?;
    }
    phi_cylinder(schedule, &union)?.max_diff(&sum)
}

fn word_at(mut rank: usize, start: usize, end: usize, k: usize) -> Vec<Symbol> {
    let len = end - start + 1;
    let mut word = vec![0; len];
    for pos in (0..len).rev() {
        word[pos] = rank % k;
        rank /= k;
    }
    word
}

pub fn phi_sigma_additivity_check(schedule: &MeasurementSchedule, parts: &[CylinderFunction], tol: f64) -> Result<bool> {
    Ok(phi_sigma_additivity_residual(schedule, parts)? <= tol)
}

/// A function measurable at infinity, given through its truncations: for a
/// window of outcomes the functional returns the value of the truncated
/// function on that window word.
pub trait TailFunctional: Send + Sync {
    fn evaluate(&self, window_word: &[Symbol]) -> C64;

    /// Declared Cauchy tolerance: truncations at successive depths are
    /// expected to settle within this bound.
    fn declared_limit_tol(&self) -> f64;

    /// Value from the symbol counts of the window, for functionals that are
    /// invariant under permutations of the window. `None` otherwise.
    fn evaluate_counts(&self, _counts: &[usize]) -> Option<C64> {
        None
    }

    /// Tabulates the truncation on steps `start..=end`.
    fn truncate(&self, start: usize, end: usize, alphabet: &Alphabet) -> Result<CylinderFunction> {
        CylinderFunction::from_fn(start, end, alphabet, |w| self.evaluate(w))
    }
}

/// The constant function `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant(pub C64);

impl TailFunctional for Constant {
    fn evaluate(&self, _: &[Symbol]) -> C64 {
        self.0
    }

    fn evaluate_counts(&self, _: &[usize]) -> Option<C64> {
        Some(self.0)
    }

    fn declared_limit_tol(&self) -> f64 {
        0.0
    }
}

/// Empirical frequency of one symbol in the window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolFrequency {
    pub symbol: Symbol,
    pub limit_tol: f64,
}

impl TailFunctional for SymbolFrequency {
    fn evaluate(&self, w: &[Symbol]) -> C64 {
        let hits = w.iter().filter(|&&s| s == self.symbol).count();
        C64::new(hits as f64 / w.len() as f64, 0.0)
    }

    fn evaluate_counts(&self, counts: &[usize]) -> Option<C64> {
        let total: usize = counts.iter().sum();
        Some(C64::new(counts[self.symbol] as f64 / total as f64, 0.0))
    }

    fn declared_limit_tol(&self) -> f64 {
        self.limit_tol
    }
}

/// Indicator that the empirical frequency of a symbol lies in the open
/// interval `(lower, upper)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyInterval {
    pub symbol: Symbol,
    pub lower: f64,
    pub upper: f64,
    pub limit_tol: f64,
}

impl FrequencyInterval {
    fn contains(&self, hits: usize, total: usize) -> bool {
        let freq = hits as f64 / total as f64;
        freq > self.lower && freq < self.upper
    }
}

impl TailFunctional for FrequencyInterval {
    fn evaluate(&self, w: &[Symbol]) -> C64 {
        let hits = w.iter().filter(|&&s| s == self.symbol).count();
        C64::new(if self.contains(hits, w.len()) { 1.0 } else { 0.0 }, 0.0)
    }

    fn evaluate_counts(&self, counts: &[usize]) -> Option<C64> {
        let total: usize = counts.iter().sum();
        Some(C64::new(if self.contains(counts[self.symbol], total) { 1.0 } else { 0.0 }, 0.0))
    }

    fn declared_limit_tol(&self) -> f64 {
        self.limit_tol
    }
}

/// One row of a truncation convergence series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    /// Window length `j_n - i_n + 1`.
    pub depth: usize,
    pub window: (usize, usize),
    /// `‖Φ(f_n) − Φ(f_{n-1})‖_max`; zero for the first window.
    pub delta: f64,
    /// Frobenius norm of `Φ(f_n)`.
    pub operator_checksum: f64,
}

/// Result of [`phi_tail`].
#[derive(Clone, Debug)]
pub struct TailReport {
    pub operator: ComplexMatrix,
    pub records: Vec<ConvergenceRecord>,
    /// Soft flag: the last delta did not settle below the declared tolerance.
    pub non_convergent: bool,
    /// Largest decoherence residual over the windows short enough to check.
    pub decoherence_residual: f64,
}

/// Approximates `Φ(f)` for a tail functional along a schedule of windows
/// `(i_n, j_n)` with both ends strictly increasing.
pub fn phi_tail(schedule: &MeasurementSchedule, f: &dyn TailFunctional, windows: &[(usize, usize)]) -> Result<TailReport> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty depth schedule".into()));
    }
    for pair in windows.windows(2) {
        let ((i0, j0), (i1, j1)) = (pair[0], pair[1]);
        if i1 <= i0 || j1 <= j0 {
            return Err(Error::InvalidArgument(format!(
                "windows must increase strictly: ({i0}, {j0}) then ({i1}, {j1})"
            )));
        }
    }
    let mut decoherence: f64 = 0.0;
    let mut records = Vec::with_capacity(windows.len());
    let mut previous: Option<ComplexMatrix> = None;
    for &(start, end) in windows {
        if start == 0 || end < start {
            return Err(Error::InvalidArgument(format!("bad window ({start}, {end})")));
        }
        if end > start && end - start < DEFAULT_MAX_WINDOW {
            decoherence = decoherence.max(decoherence_residual(schedule, start, end)?);
        }
        let truncated = f.truncate(start, end, schedule.alphabet())?;
        let op = phi_cylinder(schedule, &truncated)?;
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
        decoherence_residual: decoherence,
    })
}

/// Residuals of the multiplicativity `Φ(f χ_Δ) = Φ(f) Φ(χ_Δ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomomorphismReport {
    /// `‖Φ(f χ_Δ) − Φ_win(f) Φ(χ_Δ)‖_max`.
    pub product_residual: f64,
    /// Largest `‖[Φ_win(f), Π_ξ(t_k)]‖_max` over `k ≤` end of `Δ`.
    pub commutation_residual: f64,
    /// `‖Φ(f) − Φ_win(f)‖_max`, zero under decoherence.
    pub window_residual: f64,
    pub passed: bool,
}

/// Checks the homomorphism identity for a function `f` whose window lies
/// strictly after the window of the cylinder indicator `delta`.
///
/// `f` enters through its window-local form `Φ_win(f)`, which lives on the
/// late-time steps only; the identity then needs both ideal decoherence and
/// that `Φ_win(f)` commutes with the earlier step operators.
pub fn phi_homomorphism_check(
    schedule: &MeasurementSchedule,
    f: &CylinderFunction,
    delta: &CylinderFunction,
    tol: f64,
) -> Result<HomomorphismReport> {
    if f.start() <= delta.end() {
        return Err(Error::WindowOverlap { function_start: f.start(), cylinder_end: delta.end() });
    }
    let lhs = phi_cylinder(schedule, &f.product(delta)?)?;
    let local = phi_window(schedule, f)?;
    let rhs = &local * &phi_cylinder(schedule, delta)?;
    let product_residual = lhs.max_diff(&rhs)?;
    let mut commutation_residual: f64 = 0.0;
    for step in 1..=delta.end() {
        for symbol in 0..schedule.alphabet().len() {
            commutation_residual = commutation_residual.max(commutator_norm(&local, schedule.step_operator(step, symbol)?)?);
        }
    }
    let window_residual = phi_cylinder(schedule, f)?.max_diff(&local)?;
    Ok(HomomorphismReport {
        product_residual,
        commutation_residual,
        window_residual,
        passed: product_residual <= tol && commutation_residual <= tol,
    })
}

/// The normalized state `ω^f = Φ(f)^{1/2} P_ω Φ(f)^{1/2} / ω(Φ(f))`
/// together with its weight `ω(Φ(f))`.
#[derive(Clone, Debug)]
pub struct DualState {
    pub weight: f64,
    pub state: DensityMatrix,
}

struct DualParts {
    weight: f64,
    /// `Φ(f)^{1/2} P_ω Φ(f)^{1/2}`, not normalized.
    functional: ComplexMatrix,
}

fn dual_parts(schedule: &MeasurementSchedule, state: &DensityMatrix, f: &CylinderFunction) -> Result<DualParts> {
    if !f.is_nonnegative() {
        return Err(Error::NegativeFunctional("table has negative or complex entries".into()));
    }
    dual_parts_of(state, &phi_cylinder(schedule, f)?)
}

fn dual_parts_of(state: &DensityMatrix, phi: &ComplexMatrix) -> Result<DualParts> {
    let phi = phi.hermitian_part();
    let weight = state.expectation(&phi)?.re;
    let root = phi.psd_sqrt()?;
    let functional = &(&root * state.matrix()) * &root;
    Ok(DualParts { weight, functional })
}

pub fn dual_apply(schedule: &MeasurementSchedule, state: &DensityMatrix, f: &CylinderFunction) -> Result<DualState> {
    if !f.is_nonnegative() {
        return Err(Error::NegativeFunctional("table has negative or complex entries".into()));
    }
    dual_apply_operator(state, &phi_cylinder(schedule, f)?)
}

/// [`dual_apply`] for an already assembled positive operator `Φ(f)`.
pub fn dual_apply_operator(state: &DensityMatrix, phi: &ComplexMatrix) -> Result<DualState> {
    let parts = dual_parts_of(state, phi)?;
    if parts.weight <= tol::NULL {
        return Err(Error::NullWeight { weight: parts.weight });
    }
    let state = DensityMatrix::new(parts.functional.scale_real(1.0 / parts.weight).hermitian_part())?;
    Ok(DualState { weight: parts.weight, state })
}

/// One prefix of a [`theorem4_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureComparison {
    pub prefix: String,
    /// `∫ f χ_prefix dμ_ω` by word enumeration.
    pub weighted: f64,
    /// `μ_{Φ(f)^*(ω)}(prefix)`.
    pub dual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem4Report {
    pub rows: Vec<MeasureComparison>,
    pub max_residual: f64,
    pub passed: bool,
}

/// Compares the reweighted measure `μ_ω^f` with the LSW measure of the
/// dual functional `Φ(f)^*(ω)` on every listed prefix.
pub fn theorem4_check(
    schedule: &MeasurementSchedule,
    state: &DensityMatrix,
    f: &CylinderFunction,
    prefixes: &[HistoryPrefix],
    tol: f64,
) -> Result<Theorem4Report> {
    let parts = dual_parts(schedule, state, f)?;
    if parts.weight <= tol::NULL {
        return Err(Error::NullWeight { weight: parts.weight });
    }
    let dual = DensityMatrixLike(parts.functional);
    let mut rows = Vec::with_capacity(prefixes.len());
    let mut max_residual: f64 = 0.0;
    for prefix in prefixes {
        let indicator = if prefix.is_empty() {
            CylinderFunction::constant(1, 1, schedule.alphabet(), C64::new(1.0, 0.0))?
        } else {
            CylinderFunction::indicator(prefix, schedule.alphabet())?
        };
        let g = f.product(&indicator)?;
        let weighted = integrate(schedule, state, &g)?;
        let dual_value = dual.expectation(&prefix_effect(schedule, prefix)?)?;
        max_residual = max_residual.max((weighted - dual_value).abs());
        rows.push(MeasureComparison {
            prefix: format!("{}@{}", schedule.alphabet().format_word(prefix.outcomes()), prefix.start()),
            weighted,
            dual: dual_value,
        });
    }
    Ok(Theorem4Report { rows, max_residual, passed: max_residual <= tol })
}

/// `∫ g dμ_ω` as a sum over words of `g(w) ω(Π_w Π_w*)`.
pub fn integrate(schedule: &MeasurementSchedule, state: &DensityMatrix, g: &CylinderFunction) -> Result<f64> {
    let offset = g.start() - 1;
    let mut total = 0.0;
    for_each_word_operator(schedule, 1, g.end(), |w, op| {
        let value = g.eval(&w[offset..]);
        if value != C64::new(0.0, 0.0) {
            total += (value * state.expectation(&(op * &op.adjoint()))?).re;
        }
        Ok(())
    })?;
    Ok(total)
}

/// A positive functional held as an unnormalized density.
struct DensityMatrixLike(ComplexMatrix);

impl DensityMatrixLike {
    fn expectation(&self, a: &ComplexMatrix) -> Result<f64> {
        Ok(self.0.try_mul(a)?.trace().re)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{Instrument, Projection};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn ab() -> Alphabet {
        Alphabet::new(vec!["0".into(), "1".into()]).unwrap()
    }

    fn z_instrument() -> Instrument {
        Instrument::new(
            ab(),
            vec![
                Projection::new(ComplexMatrix::from_real_diagonal(&[1.0, 0.0])).unwrap(),
                Projection::new(ComplexMatrix::from_real_diagonal(&[0.0, 1.0])).unwrap(),
            ],
        )
        .unwrap()
    }

    fn x_instrument() -> Instrument {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Instrument::new(
            ab(),
            vec![
                Projection::onto(2, &[vec![c(s), c(s)]]).unwrap(),
                Projection::onto(2, &[vec![c(s), c(-s)]]).unwrap(),
            ],
        )
        .unwrap()
    }

    fn xz() -> MeasurementSchedule {
        MeasurementSchedule::periodic(vec![z_instrument(), x_instrument()]).unwrap()
    }

    #[test]
    fn phi_of_one_is_identity() {
        let sched = xz();
        let one = CylinderFunction::constant(1, 3, &ab(), c(1.0)).unwrap();
        let phi = phi_cylinder(&sched, &one).unwrap();
        assert!(phi.max_diff(&ComplexMatrix::identity(2)).unwrap() < 1e-12);
    }

    #[test]
    fn single_step_indicator() {
        let sched = xz();
        let f = CylinderFunction::indicator(&HistoryPrefix::initial(vec![1]), &ab()).unwrap();
        let phi = phi_cylinder(&sched, &f).unwrap();
        let p = sched.step_operator(1, 1).unwrap();
        assert!(phi.max_diff(&(p * &p.adjoint())).unwrap() < 1e-15);
    }

    #[test]
    fn empty_partition_is_zero() {
        assert_eq!(phi_sigma_additivity_residual(&xz(), &[]).unwrap(), 0.0);
    }

    #[test]
    fn overlapping_parts_rejected() {
        let a = CylinderFunction::indicator(&HistoryPrefix::initial(vec![0]), &ab()).unwrap();
        let b = CylinderFunction::indicator(&HistoryPrefix::initial(vec![0, 1]), &ab()).unwrap();
        let err = phi_sigma_additivity_residual(&xz(), &[a, b]).unwrap_err();
        assert_eq!(err, Error::OverlapDetected { word: "0,1".into() });
    }

    #[test]
    fn refinement_is_additive() {
        let sched = xz();
        let coarse = CylinderFunction::indicator(&HistoryPrefix::initial(vec![1]), &ab()).unwrap();
        let fine: Vec<_> = (0..2)
            .map(|s| CylinderFunction::indicator(&HistoryPrefix::initial(vec![1, s]), &ab()).unwrap())
            .collect();
        let sum = &phi_cylinder(&sched, &fine[0]).unwrap() + &phi_cylinder(&sched, &fine[1]).unwrap();
        assert!(phi_cylinder(&sched, &coarse).unwrap().max_diff(&sum).unwrap() < 1e-12);
        let parts: Vec<_> = (0..2)
            .map(|s| CylinderFunction::indicator(&HistoryPrefix::initial(vec![s]), &ab()).unwrap())
            .collect();
        assert!(phi_sigma_additivity_check(&sched, &parts, 1e-12).unwrap());
    }

    #[test]
    fn homomorphism_fails_without_decoherence() {
        let sched = xz();
        let delta = CylinderFunction::indicator(&HistoryPrefix::initial(vec![0]), &ab()).unwrap();
        let f = CylinderFunction::indicator(&HistoryPrefix::new(2, vec![0]).unwrap(), &ab()).unwrap();
        let report = phi_homomorphism_check(&sched, &f, &delta, 1e-10).unwrap();
        // Φ(fχ_Δ) = P0 P+ P0 = P0/2, while Φ_win(f) Φ(χ_Δ) = P+ P0.
        assert!((report.product_residual - 0.5).abs() < 1e-12);
        assert!((report.commutation_residual - 0.5).abs() < 1e-12);
        assert!(!report.passed);
    }

    #[test]
    fn homomorphism_window_overlap() {
        let delta = CylinderFunction::indicator(&HistoryPrefix::initial(vec![0, 0]), &ab()).unwrap();
        let f = CylinderFunction::indicator(&HistoryPrefix::new(2, vec![0]).unwrap(), &ab()).unwrap();
        let err = phi_homomorphism_check(&xz(), &f, &delta, 1e-10).unwrap_err();
        assert!(matches!(err, Error::WindowOverlap { .. }));
    }

    #[test]
    fn constant_tail_has_zero_deltas() {
        let sched = MeasurementSchedule::periodic(vec![z_instrument()]).unwrap();
        let report = phi_tail(&sched, &Constant(c(2.5)), &[(1, 2), (2, 4), (3, 6)]).unwrap();
        assert!(report.operator.max_diff(&ComplexMatrix::identity(2).scale_real(2.5)).unwrap() < 1e-12);
        assert!(report.records.iter().all(|r| r.delta < 1e-12));
        assert!(!report.non_convergent);
    }

    #[test]
    fn tail_windows_must_increase() {
        let sched = MeasurementSchedule::periodic(vec![z_instrument()]).unwrap();
        assert!(phi_tail(&sched, &Constant(c(1.0)), &[(2, 4), (2, 5)]).is_err());
    }

    #[test]
    fn dual_of_one_is_identity_map() {
        let sched = xz();
        let rho = DensityMatrix::diagonal(&[0.25, 0.75]).unwrap();
        let one = CylinderFunction::constant(1, 2, &ab(), c(1.0)).unwrap();
        let out = dual_apply(&sched, &rho, &one).unwrap();
        assert!((out.weight - 1.0).abs() < 1e-12);
        assert!(out.state.matrix().max_diff(rho.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn dual_rejects_negative_and_null() {
        let sched = MeasurementSchedule::periodic(vec![z_instrument()]).unwrap();
        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let neg = CylinderFunction::constant(1, 1, &ab(), c(-1.0)).unwrap();
        assert!(matches!(dual_apply(&sched, &rho, &neg), Err(Error::NegativeFunctional(_))));
        let orth = CylinderFunction::indicator(&HistoryPrefix::initial(vec![1]), &ab()).unwrap();
        assert!(matches!(dual_apply(&sched, &rho, &orth), Err(Error::NullWeight { .. })));
    }
}
