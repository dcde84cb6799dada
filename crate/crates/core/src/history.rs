//! Histories of measurement outcomes and the LSW measure they carry.
//!
//! A [`MeasurementSchedule`] assigns to every time index `i ≥ 1` one operator
//! per outcome symbol. For a stretch of outcomes `ξ_m … ξ_n` the history
//! operator is the ordered product `Π_{ξ_m}(t_m) ⋯ Π_{ξ_n}(t_n)` and the
//! probability of that stretch in the state `ω` is `ω(Π Π*)`.

use std::sync::Arc;

use crate::alphabet::{word_rank, Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::operator::{tol, ComplexMatrix, DensityMatrix, Instrument, C64};

/// Longest window that the brute-force checks will enumerate by default.
pub const DEFAULT_MAX_WINDOW: usize = 8;

/// Largest number of words any single enumeration is allowed to visit.
pub const MAX_ENUMERATION: usize = 1 << 22;

/// Depth up to which [`HistoryMeasure::new`] tests ideal decoherence.
pub const DEFAULT_DECOHERENCE_DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq)]
enum StepKind {
    /// Genuine projective instruments.
    Projective(Vec<Instrument>),
    /// One stationary family of Kraus operators `K_ξ` with `Σ K_ξ* K_ξ = 1`.
    Kraus,
}

/// Per-step measurement operators `Π_ξ(t_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSchedule {
    dim: usize,
    alphabet: Alphabet,
    steps: Vec<Vec<ComplexMatrix>>,
    kind: StepKind,
    periodic: bool,
    /// Stationary operators whose pairwise commutators vanish exactly.
    commuting: bool,
}

impl MeasurementSchedule {
    /// A finite schedule: step `i` uses `instruments[i - 1]`, and the horizon
    /// is the number of instruments.
    pub fn finite(instruments: Vec<Instrument>) -> Result<Self> {
        Self::projective(instruments, false)
    }

    /// An unbounded schedule cycling through `instruments`.
    pub fn periodic(instruments: Vec<Instrument>) -> Result<Self> {
        Self::projective(instruments, true)
    }

    fn projective(instruments: Vec<Instrument>, periodic: bool) -> Result<Self> {
        let first = instruments
            .first()
            .ok_or_else(|| Error::InvalidArgument("schedule needs at least one step".into()))?;
        let dim = first.dim();
        let alphabet = first.alphabet().clone();
        for inst in &instruments {
            if inst.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: inst.dim() });
            }
            if inst.alphabet() != &alphabet {
                return Err(Error::InvalidAlphabet("steps disagree on the alphabet".into()));
            }
        }
        let steps = instruments
            .iter()
            .map(|inst| inst.projections().iter().map(|p| p.matrix().clone()).collect())
            .collect();
        Ok(Self { dim, alphabet, steps, kind: StepKind::Projective(instruments), periodic, commuting: false })
    }

    /// An unbounded, time-homogeneous schedule of Kraus operators.
    ///
    /// This is the form a projective schedule takes once the probe registers
    /// that carry the record have been traced out against their initial
    /// state. It requires `Σ_ξ K_ξ* K_ξ = 1`.
    pub fn stationary_kraus(alphabet: Alphabet, operators: Vec<ComplexMatrix>) -> Result<Self> {
        if operators.len() != alphabet.len() {
            return Err(Error::InvalidAlphabet(format!(
                "{} symbols but {} operators",
                alphabet.len(),
                operators.len()
            )));
        }
        let dim = operators[0].dim();
        let mut sum = ComplexMatrix::zeros(dim);
        for k in &operators {
            sum = sum.try_add(&(&k.adjoint() * k))?;
        }
        let deviation = sum.max_diff(&ComplexMatrix::identity(dim))?;
        if deviation > tol::SUM {
            return Err(Error::IncompleteInstrument { deviation });
        }
        let commuting = operators
            .iter()
            .enumerate()
            .all(|(i, a)| operators[..i].iter().all(|b| (&(a * b) - &(b * a)).max_abs() == 0.0));
        Ok(Self { dim, alphabet, steps: vec![operators], kind: StepKind::Kraus, periodic: true, commuting })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Last admissible step, or `None` for unbounded schedules.
    pub fn horizon(&self) -> Option<usize> {
        if self.periodic {
            None
        } else {
            Some(self.steps.len())
        }
    }

    pub fn is_projective(&self) -> bool {
        matches!(self.kind, StepKind::Projective(_))
    }

    /// Stationary operators with exactly vanishing commutators.
    pub fn is_commuting(&self) -> bool {
        self.commuting
    }

    fn slot(&self, step: usize) -> Result<usize> {
        if step == 0 {
            return Err(Error::InvalidPrefix("time indices start at 1".into()));
        }
        if self.periodic {
            Ok((step - 1) % self.steps.len())
        } else if step <= self.steps.len() {
            Ok(step - 1)
        } else {
            Err(Error::HorizonExceeded(format!(
                "step {step} beyond schedule horizon {}",
                self.steps.len()
            )))
        }
    }

    /// The instrument used at `step`, for projective schedules.
    pub fn instrument(&self, step: usize) -> Result<Option<&Instrument>> {
        let slot = self.slot(step)?;
        Ok(match &self.kind {
            StepKind::Projective(v) => Some(&v[slot]),
            StepKind::Kraus => None,
        })
    }

    /// `Π_ξ(t_step)`.
    pub fn step_operator(&self, step: usize, symbol: Symbol) -> Result<&ComplexMatrix> {
        let slot = self.slot(step)?;
        self.steps[slot]
            .get(symbol)
            .ok_or_else(|| Error::UnknownSymbol(format!("#{symbol}")))
    }

    /// Ensures steps `1..=last` exist.
    pub fn require_steps(&self, last: usize) -> Result<()> {
        match self.horizon() {
            Some(h) if last > h => {
                Err(Error::HorizonExceeded(format!("step {last} beyond schedule horizon {h}")))
            }
            _ => Ok(()),
        }
    }
}

/// A stretch `ξ^(m,n) = (ξ_m, …, ξ_n)` of a history. The empty stretch is
/// allowed and stands for the identity operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HistoryPrefix {
    start: usize,
    outcomes: Vec<Symbol>,
}

impl HistoryPrefix {
    pub fn new(start: usize, outcomes: Vec<Symbol>) -> Result<Self> {
        if start == 0 {
            return Err(Error::InvalidPrefix("start index must be at least 1".into()));
        }
        Ok(Self { start, outcomes })
    }

    /// A prefix starting at the first step.
    pub fn initial(outcomes: Vec<Symbol>) -> Self {
        Self { start: 1, outcomes }
    }

    pub fn empty() -> Self {
        Self::initial(Vec::new())
    }

    pub fn parse(start: usize, text: &str, alphabet: &Alphabet) -> Result<Self> {
        Self::new(start, alphabet.parse_word(text)?)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Last step covered; `start - 1` for the empty stretch.
    pub fn end(&self) -> usize {
        self.start + self.outcomes.len() - 1
    }

    pub fn outcomes(&self) -> &[Symbol] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// `self · ξ`.
    pub fn extended(&self, symbol: Symbol) -> Self {
        let mut outcomes = self.outcomes.clone();
        outcomes.push(symbol);
        Self { start: self.start, outcomes }
    }

    fn validate(&self, alphabet: &Alphabet) -> Result<()> {
        match self.outcomes.iter().find(|&&s| s >= alphabet.len()) {
            Some(s) => Err(Error::UnknownSymbol(format!("#{s}"))),
            None => Ok(()),
        }
    }
}

/// `Π_{ξ_m}(t_m) ⋯ Π_{ξ_n}(t_n)`; the identity for the empty stretch.
///
/// For stationary, exactly commuting operators the factors are multiplied in
/// sorted symbol order, so that permuted words give bit-identical results.
pub fn prefix_operator(schedule: &MeasurementSchedule, prefix: &HistoryPrefix) -> Result<ComplexMatrix> {
    prefix.validate(schedule.alphabet())?;
    let mut acc = ComplexMatrix::identity(schedule.dim());
    if schedule.commuting {
        let mut sorted = prefix.outcomes().to_vec();
        sorted.sort_unstable();
        for symbol in sorted {
            acc = &acc * &schedule.steps[0][symbol];
        }
        return Ok(acc);
    }
    for (offset, &symbol) in prefix.outcomes().iter().enumerate() {
        acc = &acc * schedule.step_operator(prefix.start() + offset, symbol)?;
    }
    Ok(acc)
}

/// `Π Π*` for the stretch.
pub fn prefix_effect(schedule: &MeasurementSchedule, prefix: &HistoryPrefix) -> Result<ComplexMatrix> {
    let op = prefix_operator(schedule, prefix)?;
    Ok(&op * &op.adjoint())
}

/// Visits every word of `length` symbols placed at steps `start..` in
/// lexicographic order, passing the history operator of the word. Operators
/// are built incrementally along the word tree.
pub fn for_each_word_operator<F>(
    schedule: &MeasurementSchedule,
    start: usize,
    length: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&[Symbol], &ComplexMatrix) -> Result<()>,
{
    let k = schedule.alphabet().len();
    if !schedule.alphabet().word_count(length).is_some_and(|c| c <= MAX_ENUMERATION) {
        return Err(Error::HorizonExceeded(format!("{k}^{length} words is too many to enumerate")));
    }
    if start == 0 {
        return Err(Error::InvalidPrefix("start index must be at least 1".into()));
    }
    if length > 0 {
        schedule.require_steps(start + length - 1)?;
    }
    let mut word = Vec::with_capacity(length);
    let mut stack = vec![ComplexMatrix::identity(schedule.dim())];
    descend(schedule, start, length, k, &mut word, &mut stack, &mut visit)
}

fn descend<F>(
    schedule: &MeasurementSchedule,
    start: usize,
    length: usize,
    k: usize,
    word: &mut Vec<Symbol>,
    stack: &mut Vec<ComplexMatrix>,
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(&[Symbol], &ComplexMatrix) -> Result<()>,
{
    if word.len() == length {
        return visit(word, stack.last().expect("operator stack is never empty"));
    }
    let step = start + word.len();
    for symbol in 0..k {
        let next = stack.last().expect("operator stack is never empty") * schedule.step_operator(step, symbol)?;
        stack.push(next);
        word.push(symbol);
        descend(schedule, start, length, k, word, stack, visit)?;
        word.pop();
        stack.pop();
    }
    Ok(())
}

/// The LSW measure `μ_ω` of a state under a schedule.
///
/// Construction tests ideal decoherence on every window inside the first
/// [`DEFAULT_DECOHERENCE_DEPTH`] steps (or a configured depth) and records
/// the outcome instead of refusing, so that violating schedules can still be
/// studied.
#[derive(Clone, Debug)]
pub struct HistoryMeasure {
    schedule: Arc<MeasurementSchedule>,
    state: DensityMatrix,
    decoherence: DecoherenceFlag,
}

/// Outcome of the construction-time decoherence test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecoherenceFlag {
    pub depth: usize,
    pub passed: bool,
    pub residual: f64,
}

impl HistoryMeasure {
    pub fn new(schedule: Arc<MeasurementSchedule>, state: DensityMatrix) -> Result<Self> {
        Self::with_decoherence_depth(schedule, state, DEFAULT_DECOHERENCE_DEPTH)
    }

    pub fn with_decoherence_depth(
        schedule: Arc<MeasurementSchedule>,
        state: DensityMatrix,
        depth: usize,
    ) -> Result<Self> {
        if state.dim() != schedule.dim() {
            return Err(Error::DimensionMismatch { expected: schedule.dim(), found: state.dim() });
        }
        let depth = schedule.horizon().map_or(depth, |h| depth.min(h));
        let mut residual: f64 = 0.0;
        for n in 2..=depth {
            for m in 1..n {
                residual = residual.max(decoherence_residual(&schedule, m, n)?);
            }
        }
        let decoherence = DecoherenceFlag { depth, passed: residual <= tol::SUM, residual };
        Ok(Self { schedule, state, decoherence })
    }

    pub fn schedule(&self) -> &MeasurementSchedule {
        &self.schedule
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn decoherence(&self) -> DecoherenceFlag {
        self.decoherence
    }
}

/// `μ_ω(ξ^(m,n)) = ω(Π Π*)`, clamped to `[0, 1]`.
pub fn lsw_probability(measure: &HistoryMeasure, prefix: &HistoryPrefix) -> Result<f64> {
    let effect = prefix_effect(measure.schedule(), prefix)?;
    Ok(measure.state().expectation(&effect)?.re.clamp(0.0, 1.0))
}

/// `|Σ_ξ μ(prefix·ξ) − μ(prefix)|` for a prefix starting at step 1.
pub fn consistency_residual(measure: &HistoryMeasure, prefix: &HistoryPrefix) -> Result<f64> {
    if prefix.start() != 1 {
        return Err(Error::InvalidPrefix("consistency is checked on initial prefixes".into()));
    }
    prefix.validate(measure.schedule().alphabet())?;
    let schedule = measure.schedule();
    let base = prefix_operator(schedule, prefix)?;
    let step = prefix.end() + 1;
    let mut total = 0.0;
    for symbol in 0..schedule.alphabet().len() {
        let op = &base * schedule.step_operator(step, symbol)?;
        total += measure.state().expectation(&(&op * &op.adjoint()))?.re;
    }
    let parent = measure.state().expectation(&(&base * &base.adjoint()))?.re;
    Ok((total - parent).abs())
}

/// Kolmogorov consistency of the measure at one prefix.
pub fn check_consistency(measure: &HistoryMeasure, prefix: &HistoryPrefix, tol: f64) -> Result<bool> {
    Ok(consistency_residual(measure, prefix)? <= tol)
}

/// Largest entrywise violation of ideal decoherence on the window `m..=n`:
/// for every `i` in the window and every outcome word,
/// `Σ_{ξ_i} Π_{(m,n)} Π_{(m,n)}*` against `Π_{(m,i-1)} Π_{(i+1,n)} (…)*`.
pub fn decoherence_residual(schedule: &MeasurementSchedule, m: usize, n: usize) -> Result<f64> {
    decoherence_residual_bounded(schedule, m, n, DEFAULT_MAX_WINDOW)
}

pub fn decoherence_residual_bounded(
    schedule: &MeasurementSchedule,
    m: usize,
    n: usize,
    max_window: usize,
) -> Result<f64> {
    if m == 0 || n < m {
        return Err(Error::InvalidArgument(format!("bad window ({m}, {n})")));
    }
    let len = n - m + 1;
    if len > max_window {
        return Err(Error::HorizonExceeded(format!(
            "window of {len} steps exceeds enumeration limit {max_window}"
        )));
    }
    schedule.require_steps(n)?;
    if len == 1 {
        return Ok(0.0);
    }
    let k = schedule.alphabet().len();
    let mut worst: f64 = 0.0;
    for i in m..=n {
        // Words over the window with position i removed.
        for rest in schedule.alphabet().words(len - 1) {
            let split = i - m;
            let before = HistoryPrefix::new(m, rest[..split].to_vec())?;
            let after = HistoryPrefix::new(i + 1, rest[split..].to_vec())?;
            let a = prefix_operator(schedule, &before)?;
            let b = prefix_operator(schedule, &after)?;
            let ab = &a * &b;
            let rhs = &ab * &ab.adjoint();
            let mut lhs = ComplexMatrix::zeros(schedule.dim());
            for symbol in 0..k {
                let full = &(&a * schedule.step_operator(i, symbol)?) * &b;
                lhs = &lhs + &(&full * &full.adjoint());
            }
            worst = worst.max(lhs.max_diff(&rhs)?);
        }
    }
    Ok(worst)
}

/// Ideal decoherence on the window `m..=n` within `tol`.
pub fn check_decoherence(schedule: &MeasurementSchedule, m: usize, n: usize, tol: f64) -> Result<bool> {
    Ok(decoherence_residual(schedule, m, n)? <= tol)
}

/// A bounded function of the outcomes at steps `m..=n`, tabulated over
/// words in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunction {
    start: usize,
    end: usize,
    k: usize,
    table: Vec<C64>,
}

impl CylinderFunction {
    pub fn new(start: usize, end: usize, k: usize, table: Vec<C64>) -> Result<Self> {
        if start == 0 || end < start {
            return Err(Error::InvalidArgument(format!("bad window ({start}, {end})")));
        }
        let expected = k
            .checked_pow((end - start + 1) as u32)
            .filter(|&c| c <= MAX_ENUMERATION)
            .ok_or_else(|| Error::HorizonExceeded(format!("window ({start}, {end}) too wide")))?;
        if table.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "table has {} entries, window needs {expected}",
                table.len()
            )));
        }
        if table.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("table entries must be finite".into()));
        }
        Ok(Self { start, end, k, table })
    }

    pub fn from_fn<F>(start: usize, end: usize, alphabet: &Alphabet, f: F) -> Result<Self>
    where
        F: Fn(&[Symbol]) -> C64,
    {
        if start == 0 || end < start {
            return Err(Error::InvalidArgument(format!("bad window ({start}, {end})")));
        }
        let len = end - start + 1;
        alphabet
            .word_count(len)
            .filter(|&c| c <= MAX_ENUMERATION)
            .ok_or_else(|| Error::HorizonExceeded(format!("window ({start}, {end}) too wide")))?;
        let table = alphabet.words(len).map(|w| f(&w)).collect();
        Self::new(start, end, alphabet.len(), table)
    }

    pub fn constant(start: usize, end: usize, alphabet: &Alphabet, c: C64) -> Result<Self> {
        Self::from_fn(start, end, alphabet, |_| c)
    }

    /// Indicator of the cylinder `{ξ : ξ_m … ξ_n = word}`.
    pub fn indicator(prefix: &HistoryPrefix, alphabet: &Alphabet) -> Result<Self> {
        if prefix.is_empty() {
            return Err(Error::InvalidPrefix("indicator of the empty stretch".into()));
        }
        prefix.validate(alphabet)?;
        let target = prefix.outcomes().to_vec();
        Self::from_fn(prefix.start(), prefix.end(), alphabet, move |w| {
            C64::new(if w == target.as_slice() { 1.0 } else { 0.0 }, 0.0)
        })
    }

    /// Indicator of a union of words on one window.
    pub fn indicator_of_set(start: usize, end: usize, alphabet: &Alphabet, words: &[Vec<Symbol>]) -> Result<Self> {
        Self::from_fn(start, end, alphabet, |w| {
            C64::new(if words.iter().any(|x| x.as_slice() == w) { 1.0 } else { 0.0 }, 0.0)
        })
    }

    pub fn window(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn alphabet_len(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &[C64] {
        &self.table
    }

    /// Value on a word covering exactly the window.
    pub fn eval(&self, window_word: &[Symbol]) -> C64 {
        self.table[word_rank(window_word, self.k)]
    }

    /// Value on a word that starts at step 1 and reaches at least `end`.
    pub fn eval_history(&self, history: &[Symbol]) -> C64 {
        self.eval(&history[self.start - 1..self.end])
    }

    /// `‖f‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.table.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.table.iter().all(|z| z.im.abs() <= tol::NULL && z.re >= -tol::NULL)
    }

    pub fn conj(&self) -> Self {
        Self { table: self.table.iter().map(|z| z.conj()).collect(), ..self.clone() }
    }

    /// Re-tabulates on a wider window containing the current one.
    pub fn extend_to(&self, start: usize, end: usize) -> Result<Self> {
        if start > self.start || end < self.end {
            return Err(Error::InvalidArgument(format!(
                "window ({start}, {end}) does not contain ({}, {})",
                self.start, self.end
            )));
        }
        let offset = self.start - start;
        let len = self.end - self.start + 1;
        let k = self.k;
        let wide = end - start + 1;
        let count = k
            .checked_pow(wide as u32)
            .filter(|&c| c <= MAX_ENUMERATION)
            .ok_or_else(|| Error::HorizonExceeded(format!("window ({start}, {end}) too wide")))?;
        let mut table = Vec::with_capacity(count);
        let mut word = vec![0; wide];
        for _ in 0..count {
            table.push(self.eval(&word[offset..offset + len]));
            increment(&mut word, k);
        }
        Self::new(start, end, k, table)
    }

    fn combine<F>(&self, other: &Self, op: F) -> Result<Self>
    where
        F: Fn(C64, C64) -> C64,
    {
        if self.k != other.k {
            return Err(Error::InvalidAlphabet("functions use different alphabets".into()));
        }
        let start = self.start.min(other.start);
        let end = self.end.max(other.end);
        let a = self.extend_to(start, end)?;
        let b = other.extend_to(start, end)?;
        let table = a.table.iter().zip(&b.table).map(|(&x, &y)| op(x, y)).collect();
        Self::new(start, end, self.k, table)
    }

    /// Pointwise product on the union of the two windows.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.combine(other, |x, y| x * y)
    }

    /// `a·self + b·other` on the union of the two windows.
    pub fn linear_combination(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.combine(other, |x, y| a * x + b * y)
    }
}

fn increment(word: &mut [Symbol], k: usize) {
    for pos in (0..word.len()).rev() {
        word[pos] += 1;
        if word[pos] < k {
            return;
        }
        word[pos] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Projection;

    fn diag_instrument(a: &[f64]) -> Instrument {
        let comp: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
        Instrument::new(
            Alphabet::new(vec!["a".into(), "b".into()]).unwrap(),
            vec![
                Projection::new(ComplexMatrix::from_real_diagonal(a)).unwrap(),
                Projection::new(ComplexMatrix::from_real_diagonal(&comp)).unwrap(),
            ],
        )
        .unwrap()
    }

    fn xz_schedule() -> MeasurementSchedule {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = |x: f64| C64::new(x, 0.0);
        let plus = Projection::onto(2, &[vec![c(s), c(s)]]).unwrap();
        let minus = Projection::onto(2, &[vec![c(s), c(-s)]]).unwrap();
        let ab = Alphabet::new(vec!["0".into(), "1".into()]).unwrap();
        let x = Instrument::new(ab.clone(), vec![plus, minus]).unwrap();
        let z = diag_instrument(&[1.0, 0.0]);
        let z = Instrument::new(ab, z.projections().to_vec()).unwrap();
        MeasurementSchedule::periodic(vec![x, z]).unwrap()
    }

    #[test]
    fn empty_prefix_is_identity() {
        let sched = MeasurementSchedule::periodic(vec![diag_instrument(&[1.0, 0.0])]).unwrap();
        let op = prefix_operator(&sched, &HistoryPrefix::empty()).unwrap();
        assert_eq!(op, ComplexMatrix::identity(2));
    }

    #[test]
    fn single_outcome_alphabet_is_identity() {
        let inst = Instrument::new(
            Alphabet::new(vec!["only".into()]).unwrap(),
            vec![Projection::new(ComplexMatrix::identity(3)).unwrap()],
        )
        .unwrap();
        let sched = MeasurementSchedule::periodic(vec![inst]).unwrap();
        let op = prefix_operator(&sched, &HistoryPrefix::initial(vec![0, 0, 0, 0])).unwrap();
        assert!(op.max_diff(&ComplexMatrix::identity(3)).unwrap() < 1e-15);
    }

    #[test]
    fn commuting_diagonals_multiply_elementwise() {
        let s1 = diag_instrument(&[1.0, 0.0, 1.0]);
        let s2 = diag_instrument(&[1.0, 1.0, 0.0]);
        let sched = MeasurementSchedule::finite(vec![s1, s2]).unwrap();
        // ξ1 = a (diag 1,0,1), ξ2 = b (diag 0,0,1).
        let op = prefix_operator(&sched, &HistoryPrefix::initial(vec![0, 1])).unwrap();
        assert_eq!(op, ComplexMatrix::from_real_diagonal(&[0.0, 0.0, 1.0]));
    }

    #[test]
    fn prefix_beyond_horizon() {
        let sched = MeasurementSchedule::finite(vec![diag_instrument(&[1.0, 0.0])]).unwrap();
        let err = prefix_operator(&sched, &HistoryPrefix::initial(vec![0, 0])).unwrap_err();
        assert!(matches!(err, Error::HorizonExceeded(_)));
        let err = prefix_operator(&sched, &HistoryPrefix::initial(vec![5])).unwrap_err();
        assert!(matches!(err, Error::UnknownSymbol(_)));
    }

    #[test]
    fn empty_prefix_has_probability_one() {
        let sched = Arc::new(xz_schedule());
        let mu = HistoryMeasure::new(sched, DensityMatrix::diagonal(&[0.3, 0.7]).unwrap()).unwrap();
        assert!((lsw_probability(&mu, &HistoryPrefix::empty()).unwrap() - 1.0).abs() < 1e-15);
        assert!(check_consistency(&mu, &HistoryPrefix::empty(), 1e-12).unwrap());
    }

    #[test]
    fn xz_alternation_violates_decoherence() {
        let sched = xz_schedule();
        // Hand computation: Σ_{ξ2} P_a Q_b P_c Q_b P_a = P_a/2 while
        // P_a P_c P_a = δ_ac P_a; the entries of P_+ /2 have modulus 1/4.
        let r = decoherence_residual(&sched, 1, 3).unwrap();
        assert!((r - 0.25).abs() < 1e-12, "residual {r}");
        assert!(!check_decoherence(&sched, 1, 2, 1e-10).unwrap());
        assert!(check_decoherence(&sched, 2, 2, 1e-10).unwrap());
        let mu = HistoryMeasure::new(Arc::new(sched), DensityMatrix::maximally_mixed(2)).unwrap();
        assert!(!mu.decoherence().passed);
    }

    #[test]
    fn commuting_schedule_decoheres() {
        let sched = MeasurementSchedule::periodic(vec![
            diag_instrument(&[1.0, 0.0, 1.0]),
            diag_instrument(&[0.0, 1.0, 1.0]),
        ])
        .unwrap();
        for n in 2..=5 {
            for m in 1..n {
                assert!(check_decoherence(&sched, m, n, 1e-12).unwrap());
            }
        }
    }

    #[test]
    fn decoherence_window_limit() {
        let sched = xz_schedule();
        assert!(matches!(decoherence_residual(&sched, 1, 9), Err(Error::HorizonExceeded(_))));
    }

    #[test]
    fn consistency_needs_initial_prefix() {
        let mu = HistoryMeasure::new(Arc::new(xz_schedule()), DensityMatrix::maximally_mixed(2)).unwrap();
        let p = HistoryPrefix::new(2, vec![0]).unwrap();
        assert!(matches!(check_consistency(&mu, &p, 1e-12), Err(Error::InvalidPrefix(_))));
    }

    #[test]
    fn word_visitor_matches_prefix_operator() {
        let sched = xz_schedule();
        let mut seen = 0;
        for_each_word_operator(&sched, 2, 3, |w, op| {
            let direct = prefix_operator(&sched, &HistoryPrefix::new(2, w.to_vec())?)?;
            assert!(op.max_diff(&direct)? < 1e-15);
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 8);
    }

    #[test]
    fn cylinder_product_and_extension() {
        let ab = Alphabet::new(vec!["a".into(), "b".into()]).unwrap();
        let f = CylinderFunction::from_fn(2, 2, &ab, |w| C64::new(w[0] as f64 + 1.0, 0.0)).unwrap();
        let g = CylinderFunction::indicator(&HistoryPrefix::initial(vec![1]), &ab).unwrap();
        let h = f.product(&g).unwrap();
        assert_eq!(h.window(), (1, 2));
        assert_eq!(h.eval(&[1, 1]), C64::new(2.0, 0.0));
        assert_eq!(h.eval(&[0, 1]), C64::new(0.0, 0.0));
        let e = f.extend_to(1, 3).unwrap();
        assert_eq!(e.eval(&[0, 1, 0]), C64::new(2.0, 0.0));
        assert!(f.extend_to(3, 4).is_err());
    }
}
