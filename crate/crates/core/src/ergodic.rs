//! The countable ergodic disintegration of history measures.
//!
//! For the reference model the history measure of a state splits into
//! label-conditional product measures, `μ_ω = Σ_ν P(ν) μ(·|ν)`, with
//! mutually singular, tail-trivial components. This module builds the split
//! exactly from the model, estimates it from sampled trajectories, and checks
//! the properties that make it the ergodic decomposition: the 0-1 law on
//! tail events, mutual singularity, extremality, and uniqueness of weights.
//!
//! Conditional measures are tabulated on all words of a fixed depth in
//! lexicographic order; probabilities of shorter words are marginals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::alphabet::{word_rank, Alphabet, Symbol};
use crate::error::{Error, Result};
use crate::history::{lsw_probability, HistoryMeasure, HistoryPrefix, MAX_ENUMERATION};
use crate::ndm::{classify_frequency, sample_many, MixtureState, NdmModel, Trajectory};
use crate::stats::{
    binomial_frequency_probability, binomial_sigma, composition_count, compositions, ln_factorials,
    ln_multinomial_probability,
};

/// Default clustering radius in total variation.
pub const DEFAULT_EPS_MOL: f64 = 0.1;
/// Default depth of empirical conditional tables.
pub const DEFAULT_DEPTH: usize = 3;
/// Default fraction of every trajectory discarded before tail estimation.
pub const DEFAULT_BURN_IN: f64 = 0.1;
/// Residual below which a measure counts as a mixture of the others.
pub const DEFAULT_DELTA_EXT: f64 = 1e-3;

/// Largest family handled by [`extremality_check`] (supports are enumerated).
pub const MAX_FAMILY: usize = 16;

/// Total variation between two tables on the same word set.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Label weights and label-conditional measures tabulated to a depth.
#[derive(Clone, Debug, PartialEq)]
pub struct Disintegration {
    alphabet: Alphabet,
    labels: Vec<usize>,
    weights: Vec<f64>,
    depth: usize,
    /// `conditionals[i][rank(w)] = μ(w|labels[i])` for words of length `depth`.
    conditionals: Vec<Vec<f64>>,
}

impl Disintegration {
    pub fn new(alphabet: Alphabet, labels: Vec<usize>, weights: Vec<f64>, depth: usize, conditionals: Vec<Vec<f64>>) -> Result<Self> {
        if labels.is_empty() || labels.len() != weights.len() || labels.len() != conditionals.len() {
            return Err(Error::InvalidArgument("labels, weights and conditionals must align".into()));
        }
        let size = alphabet
            .word_count(depth)
            .filter(|&c| c <= MAX_ENUMERATION)
            .ok_or_else(|| Error::HorizonExceeded(format!("cannot tabulate words of length {depth}")))?;
        if conditionals.iter().any(|t| t.len() != size) {
            return Err(Error::InvalidArgument(format!("tables must have {size} entries")));
        }
        Ok(Self { alphabet, labels, weights, depth, conditionals })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Depth-level table of the `i`-th component.
    pub fn table(&self, index: usize) -> &[f64] {
        &self.conditionals[index]
    }

    /// Position of a label among the components.
    pub fn index_of(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    fn marginal(&self, table: &[f64], word: &[Symbol]) -> Result<f64> {
        if word.len() > self.depth {
            return Err(Error::HorizonExceeded(format!(
                "word of length {} beyond tabulated depth {}",
                word.len(),
                self.depth
            )));
        }
        let k = self.alphabet.len();
        let block = k.pow((self.depth - word.len()) as u32);
        let lo = word_rank(word, k) * block;
        Ok(table[lo..lo + block].iter().sum())
    }

    /// `μ(w|labels[index])` for any word no longer than the depth.
    pub fn conditional(&self, index: usize, word: &[Symbol]) -> Result<f64> {
        self.marginal(&self.conditionals[index], word)
    }

    /// `Σ_ν P(ν) μ(w|ν)`.
    pub fn mixture(&self, word: &[Symbol]) -> Result<f64> {
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w * self.conditional(i, word)?;
        }
        Ok(acc)
    }

    /// Depth-level table of the mixture.
    pub fn mixture_table(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.conditionals[0].len()];
        for (w, table) in self.weights.iter().zip(&self.conditionals) {
            for (o, p) in out.iter_mut().zip(table) {
                *o += w * p;
            }
        }
        out
    }

    /// Largest `|Σ_w μ(w|ν) − 1|` over components.
    pub fn normalization_residual(&self) -> f64 {
        self.conditionals.iter().map(|t| (t.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest `|Σ_ν P(ν) μ(w|ν) − μ_ω(w)|` over all words of length
    /// `1..=depth`, against the LSW measure.
    pub fn reconstruction_residual(&self, measure: &HistoryMeasure) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for len in 1..=self.depth {
            for word in self.alphabet.words(len) {
                let exact = lsw_probability(measure, &HistoryPrefix::initial(word.clone()))?;
                worst = worst.max((self.mixture(&word)? - exact).abs());
            }
        }
        Ok(worst)
    }

    /// Total variation between components `i` and `j` at the tabulated depth.
    pub fn pairwise_tv(&self, i: usize, j: usize) -> f64 {
        total_variation(&self.conditionals[i], &self.conditionals[j])
    }

    /// Serializable form: words are rendered with the alphabet's names.
    pub fn to_record(&self) -> DisintegrationRecord {
        let words: Vec<String> = self.alphabet.words(self.depth).map(|w| self.alphabet.format_word(&w)).collect();
        DisintegrationRecord {
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            depth: self.depth,
            conditionals: self
                .labels
                .iter()
                .zip(&self.conditionals)
                .map(|(&label, table)| ConditionalTable {
                    label,
                    table: words
                        .iter()
                        .zip(table)
                        .map(|(word, &probability)| WordProbability { word: word.clone(), probability })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Serialized [`Disintegration`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisintegrationRecord {
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub depth: usize,
    pub conditionals: Vec<ConditionalTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub label: usize,
    pub table: Vec<WordProbability>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordProbability {
    pub word: String,
    pub probability: f64,
}

/// The disintegration read off the model: weights `ω(Q_ν)` and product
/// conditionals `Π_i p(·|ν)`.
pub fn disintegrate_exact(model: &NdmModel, state: &MixtureState, depth: usize) -> Result<Disintegration> {
    if state.weights().len() != model.labels() {
        return Err(Error::InvalidWeights(format!("{} weights for {} labels", state.weights().len(), model.labels())));
    }
    let alphabet = model.alphabet().clone();
    if !alphabet.word_count(depth).is_some_and(|c| c <= MAX_ENUMERATION) {
        return Err(Error::HorizonExceeded(format!("cannot tabulate words of length {depth}")));
    }
    let conditionals = (0..model.labels())
        .map(|nu| alphabet.words(depth).map(|w| model.product_probability(nu, &w)).collect())
        .collect();
    Disintegration::new(alphabet, (0..model.labels()).collect(), state.weights().to_vec(), depth, conditionals)
}

/// Settings of [`disintegrate_empirical`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSettings {
    pub depth: usize,
    pub eps_mol: f64,
    pub burn_in: f64,
    pub min_trajectories: usize,
}

impl Default for EmpiricalSettings {
    fn default() -> Self {
        Self { depth: DEFAULT_DEPTH, eps_mol: DEFAULT_EPS_MOL, burn_in: DEFAULT_BURN_IN, min_trajectories: 10 }
    }
}

/// Groups of trajectories with indistinguishable tail statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeClustering {
    pub eps_mol: f64,
    /// Label each cluster was identified with.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Mean tail frequency of the model's symbol `1` per cluster.
    pub mean_frequencies: Vec<f64>,
    /// Largest depth-1 total variation between a member and its cluster mean.
    pub within_radius: Vec<f64>,
    /// Pairwise total variation of the cluster conditionals at depth `d`.
    pub tv_matrix: Vec<Vec<f64>>,
    /// Cluster of every input trajectory, in input order.
    pub assignment: Vec<usize>,
}

/// An estimated disintegration with its clustering report.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDisintegration {
    pub disintegration: Disintegration,
    pub clustering: MoleculeClustering,
    pub trajectories: usize,
}

fn tail_start(len: usize, burn_in: f64) -> usize {
    ((len as f64) * burn_in).ceil() as usize
}

/// Estimates the disintegration from sampled trajectories.
///
/// Each trajectory loses its first `burn_in` fraction. Trajectories are
/// clustered on the tail frequency of the symbol `1`: sorted frequencies
/// separated by more than `eps_mol` start a new cluster. Clusters are
/// identified with the label nearest to their mean frequency. Conditionals
/// are the relative counts of non-overlapping depth-`d` windows in the
/// tails, and weights are cluster fractions.
pub fn disintegrate_empirical(
    model: &NdmModel,
    trajectories: &[Trajectory],
    settings: &EmpiricalSettings,
) -> Result<EmpiricalDisintegration> {
    let EmpiricalSettings { depth, eps_mol, burn_in, min_trajectories } = *settings;
    if depth == 0 || !(eps_mol > 0.0) || !(0.0..1.0).contains(&burn_in) {
        return Err(Error::InvalidArgument("depth ≥ 1, eps_mol > 0 and burn-in in [0, 1) are required".into()));
    }
    if trajectories.len() < min_trajectories.max(1) {
        return Err(Error::InsufficientData(format!(
            "{} trajectories, at least {} required",
            trajectories.len(),
            min_trajectories.max(1)
        )));
    }
    let alphabet = model.alphabet();
    let k = alphabet.len();
    let size = alphabet
        .word_count(depth)
        .filter(|&c| c <= MAX_ENUMERATION)
        .ok_or_else(|| Error::HorizonExceeded(format!("cannot tabulate words of length {depth}")))?;
    let one = model.one_symbol();

    // Tail symbol frequencies per trajectory.
    let mut freqs: Vec<Vec<f64>> = Vec::with_capacity(trajectories.len());
    for (j, t) in trajectories.iter().enumerate() {
        let tail = &t.outcomes[tail_start(t.outcomes.len(), burn_in)..];
        if tail.len() < depth {
            return Err(Error::InsufficientData(format!("trajectory {j} has a tail shorter than depth {depth}")));
        }
        let mut counts = vec![0usize; k];
        for &s in tail {
            counts[s] += 1;
        }
        freqs.push(counts.iter().map(|&c| c as f64 / tail.len() as f64).collect());
    }

    // 1-D clustering on the frequency of `1`.
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by(|&a, &b| freqs[a][one].total_cmp(&freqs[b][one]).then(a.cmp(&b)));
    let mut assignment = vec![0usize; trajectories.len()];
    let mut clusters: Vec<Vec<usize>> = vec![vec![order[0]]];
    for pair in order.windows(2) {
        if freqs[pair[1]][one] - freqs[pair[0]][one] > eps_mol {
            clusters.push(Vec::new());
        }
        clusters.last_mut().expect("non-empty").push(pair[1]);
    }
    for (c, members) in clusters.iter().enumerate() {
        for &j in members {
            assignment[j] = c;
        }
    }

    let mut mean_frequencies = Vec::with_capacity(clusters.len());
    let mut within_radius = Vec::with_capacity(clusters.len());
    let mut labels = Vec::with_capacity(clusters.len());
    let mut tables = Vec::with_capacity(clusters.len());
    for members in &clusters {
        let mut mean = vec![0.0; k];
        for &j in members {
            for (m, f) in mean.iter_mut().zip(&freqs[j]) {
                *m += f;
            }
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        let radius = members.iter().map(|&j| total_variation(&freqs[j], &mean)).fold(0.0, f64::max);
        if radius > eps_mol {
            return Err(Error::ClusterAmbiguity(format!("cluster radius {radius:.4} exceeds eps_mol = {eps_mol}")));
        }
        let label = classify_frequency(model, mean[one]).0;
        if labels.contains(&label) {
            return Err(Error::ClusterAmbiguity(format!("two clusters identify with label {label}")));
        }

        let mut counts = vec![0u64; size];
        let mut windows = 0u64;
        for &j in members {
            let outcomes = &trajectories[j].outcomes;
            let tail = &outcomes[tail_start(outcomes.len(), burn_in)..];
            for chunk in tail.chunks_exact(depth) {
                counts[word_rank(chunk, k)] += 1;
                windows += 1;
            }
        }
        tables.push(counts.into_iter().map(|c| c as f64 / windows as f64).collect::<Vec<f64>>());
        mean_frequencies.push(mean[one]);
        within_radius.push(radius);
        labels.push(label);
    }

    let n = clusters.len();
    let mut tv_matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let tv = total_variation(&tables[i], &tables[j]);
            if tv < 2.0 * eps_mol {
                return Err(Error::ClusterAmbiguity(format!(
                    "clusters {j} and {i} are only {tv:.4} apart (need {})",
                    2.0 * eps_mol
                )));
            }
            tv_matrix[i][j] = tv;
            tv_matrix[j][i] = tv;
        }
    }

    // Present components in label order.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by_key(|&c| labels[c]);
    let mut rank = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        rank[old] = new;
    }
    let total = trajectories.len() as f64;
    let clustering = MoleculeClustering {
        eps_mol,
        labels: perm.iter().map(|&c| labels[c]).collect(),
        sizes: perm.iter().map(|&c| clusters[c].len()).collect(),
        mean_frequencies: perm.iter().map(|&c| mean_frequencies[c]).collect(),
        within_radius: perm.iter().map(|&c| within_radius[c]).collect(),
        tv_matrix: perm.iter().map(|&a| perm.iter().map(|&b| tv_matrix[a][b]).collect()).collect(),
        assignment: assignment.into_iter().map(|c| rank[c]).collect(),
    };
    let disintegration = Disintegration::new(
        alphabet.clone(),
        clustering.labels.clone(),
        clustering.sizes.iter().map(|&s| s as f64 / total).collect(),
        depth,
        perm.iter().map(|&c| tables[c].clone()).collect(),
    )?;
    Ok(EmpiricalDisintegration { disintegration, clustering, trajectories: trajectories.len() })
}

/// Per-label comparison of an estimated disintegration with the exact one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelAgreement {
    pub label: usize,
    pub exact_weight: f64,
    pub empirical_weight: f64,
    /// Binomial standard deviation of the weight estimate.
    pub sigma: f64,
    /// `|empirical − exact| / σ`; zero when both agree exactly.
    pub z: f64,
    /// Total variation of the conditionals at the empirical depth, when the
    /// label was observed.
    pub tv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub labels: Vec<LabelAgreement>,
    pub max_z: f64,
    pub max_tv: f64,
}

impl Agreement {
    /// Weights within `z_max` standard deviations and conditionals within
    /// `tv_max`.
    pub fn passes(&self, z_max: f64, tv_max: f64) -> bool {
        self.max_z <= z_max && self.max_tv <= tv_max
    }
}

/// Compares an empirical disintegration over `n` trajectories with the exact
/// one at the same depth.
pub fn compare_disintegrations(empirical: &EmpiricalDisintegration, exact: &Disintegration) -> Result<Agreement> {
    let emp = &empirical.disintegration;
    if emp.depth() != exact.depth() || emp.alphabet() != exact.alphabet() {
        return Err(Error::InvalidArgument("disintegrations tabulated on different words".into()));
    }
    let n = empirical.trajectories;
    let mut labels = Vec::with_capacity(exact.labels().len());
    for (i, &label) in exact.labels().iter().enumerate() {
        let exact_weight = exact.weights()[i];
        let found = emp.index_of(label);
        let empirical_weight = found.map_or(0.0, |j| emp.weights()[j]);
        let sigma = binomial_sigma(exact_weight, n);
        let diff = (empirical_weight - exact_weight).abs();
        let z = if diff == 0.0 { 0.0 } else if sigma > 0.0 { diff / sigma } else { f64::INFINITY };
        let tv = found.map(|j| total_variation(emp.table(j), exact.table(i)));
        labels.push(LabelAgreement { label, exact_weight, empirical_weight, sigma, z, tv });
    }
    for &label in emp.labels() {
        if exact.index_of(label).is_none() {
            return Err(Error::InvalidArgument(format!("label {label} absent from the exact disintegration")));
        }
    }
    let max_z = labels.iter().map(|l| l.z).fold(0.0, f64::max);
    let max_tv = labels.iter().filter_map(|l| l.tv).fold(0.0, f64::max);
    Ok(Agreement { labels, max_z, max_tv })
}

/// Closed frequency interval `[lower, upper]` for the symbol `1`: the tail
/// event "the limiting frequency lies in the interval".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPredicate {
    pub lower: f64,
    pub upper: f64,
}

impl FrequencyPredicate {
    pub fn contains(&self, frequency: f64) -> bool {
        self.lower <= frequency && frequency <= self.upper
    }

    fn is_everything(&self) -> bool {
        self.lower <= 0.0 && self.upper >= 1.0
    }
}

/// Endpoints closer than this to some `p(1|ν)` are rejected.
const BOUNDARY_TOL: f64 = 1e-12;

/// Distance from a 0-1 limit accepted by [`ZeroOneReport::passes`].
pub const ZERO_ONE_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneSeries {
    pub label: usize,
    /// 1 when `p(1|ν)` lies inside the interval, else 0.
    pub limit: f64,
    /// `μ(frequency_T ∈ [lower, upper] | ν)` at each horizon.
    pub estimates: Vec<f64>,
    /// Distance to the limit never grows by more than `1e-12`.
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneReport {
    pub predicate: FrequencyPredicate,
    pub horizons: Vec<usize>,
    pub series: Vec<ZeroOneSeries>,
}

impl ZeroOneReport {
    /// Every last estimate lies within `tol` of 0 or 1.
    pub fn passes(&self, tol: f64) -> bool {
        self.series.iter().all(|s| {
            let last = *s.estimates.last().expect("at least one horizon");
            last <= tol || last >= 1.0 - tol
        })
    }

    /// Every last estimate lies within `tol` of its predicted limit.
    pub fn matches_limits(&self, tol: f64) -> bool {
        self.series.iter().all(|s| (s.estimates.last().expect("at least one horizon") - s.limit).abs() <= tol)
    }
}

fn check_predicate(model: &NdmModel, predicate: &FrequencyPredicate) -> Result<()> {
    if !(predicate.lower <= predicate.upper) {
        return Err(Error::InvalidArgument("empty frequency interval".into()));
    }
    if predicate.is_everything() {
        return Ok(());
    }
    for nu in 0..model.labels() {
        for endpoint in [predicate.lower, predicate.upper] {
            if (endpoint - model.p_one(nu)).abs() <= BOUNDARY_TOL {
                return Err(Error::BoundaryPredicate { endpoint, label: nu });
            }
        }
    }
    Ok(())
}

/// Exact probabilities, under each `μ(·|ν)`, that the frequency of `1` over
/// the first `T` steps lies in the interval, for each horizon `T`.
pub fn zero_one_law_check(model: &NdmModel, predicate: &FrequencyPredicate, horizons: &[usize]) -> Result<ZeroOneReport> {
    check_predicate(model, predicate)?;
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::InvalidArgument("horizons must be non-empty and positive".into()));
    }
    let series = (0..model.labels())
        .map(|nu| {
            let p = model.p_one(nu);
            let limit = if predicate.contains(p) { 1.0 } else { 0.0 };
            let estimates: Vec<f64> = horizons
                .iter()
                .map(|&t| {
                    if predicate.is_everything() {
                        1.0
                    } else {
                        binomial_frequency_probability(t, p, predicate.lower, predicate.upper)
                    }
                })
                .collect();
            let monotone = estimates.windows(2).all(|w| (w[1] - limit).abs() <= (w[0] - limit).abs() + 1e-12);
            ZeroOneSeries { label: nu, limit, estimates, monotone }
        })
        .collect();
    Ok(ZeroOneReport { predicate: *predicate, horizons: horizons.to_vec(), series })
}

/// Sampled counterpart of [`zero_one_law_check`]: per label, the fraction of
/// `count` trajectories of length `horizon` whose frequency lies in the
/// interval. Label `ν` uses seed `seed + ν`.
pub fn zero_one_law_monte_carlo(
    model: &NdmModel,
    predicate: &FrequencyPredicate,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_predicate(model, predicate)?;
    if count == 0 {
        return Err(Error::InsufficientData("no trajectories requested".into()));
    }
    (0..model.labels())
        .map(|nu| {
            let state = MixtureState::point_mass(model.labels(), nu)?;
            let trajs = sample_many(model, &state, horizon, seed.wrapping_add(nu as u64), count)?;
            let hits = trajs
                .iter()
                .filter(|t| {
                    let f = t.outcomes.iter().filter(|&&s| s == model.one_symbol()).count() as f64 / horizon as f64;
                    predicate.contains(f)
                })
                .count();
            Ok(hits as f64 / count as f64)
        })
        .collect()
}

/// Separation of one pair of label-conditional measures across depths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSeparation {
    pub first: usize,
    pub second: usize,
    pub depths: Vec<usize>,
    /// Exact total variation of the depth-`d` marginals.
    pub tv: Vec<f64>,
    /// `1 − BC^d`, with `BC` the one-step Bhattacharyya coefficient; a lower
    /// bound on the total variation.
    pub hellinger_bound: Vec<f64>,
    pub nondecreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub pairs: Vec<PairSeparation>,
}

impl SingularityReport {
    /// Smallest total variation at the deepest depth.
    pub fn min_final_tv(&self) -> f64 {
        self.pairs.iter().map(|p| *p.tv.last().expect("at least one depth")).fold(f64::INFINITY, f64::min)
    }
}

/// Largest depth at which [`product_tv`] enumerates count vectors.
pub const MAX_TV_COMPOSITIONS: usize = 1 << 22;

/// Exact total variation between `p^{⊗d}` and `q^{⊗d}`, summed over symbol
/// count classes (each class is a set of words with equal probability).
pub fn product_tv(p: &[f64], q: &[f64], depth: usize) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    if !composition_count(depth, p.len()).is_some_and(|c| c <= MAX_TV_COMPOSITIONS) {
        return Err(Error::HorizonExceeded(format!("too many count classes at depth {depth}")));
    }
    let ln_fact = ln_factorials(depth);
    let tv: f64 = compositions(depth, p.len())
        .iter()
        .map(|counts| {
            let a = ln_multinomial_probability(counts, p, &ln_fact).exp();
            let b = ln_multinomial_probability(counts, q, &ln_fact).exp();
            (a - b).abs()
        })
        .sum();
    Ok((0.5 * tv).min(1.0))
}

/// Pairwise separation of the label-conditional measures of the model at
/// each depth. Pairs with `ν = ν′` are included (distance 0) only when
/// `include_diagonal` is set.
pub fn mutual_singularity_check(model: &NdmModel, depths: &[usize], include_diagonal: bool) -> Result<SingularityReport> {
    if model.labels() < 2 && !include_diagonal {
        return Err(Error::InvalidModel("mutual singularity needs at least two labels".into()));
    }
    if depths.is_empty() {
        return Err(Error::InvalidArgument("no depths requested".into()));
    }
    let mut pairs = Vec::new();
    for a in 0..model.labels() {
        for b in a..model.labels() {
            if a == b && !include_diagonal {
                continue;
            }
            let (p, q) = (&model.law()[a], &model.law()[b]);
            let bc: f64 = p.iter().zip(q).map(|(x, y)| (x * y).sqrt()).sum();
            let tv = depths.iter().map(|&d| product_tv(p, q, d)).collect::<Result<Vec<_>>>()?;
            let hellinger_bound = depths.iter().map(|&d| 1.0 - bc.min(1.0).powi(d as i32)).collect();
            let mut order: Vec<usize> = (0..depths.len()).collect();
            order.sort_by_key(|&i| depths[i]);
            let nondecreasing = order.windows(2).all(|w| tv[w[1]] >= tv[w[0]] - 1e-12);
            pairs.push(PairSeparation { first: a, second: b, depths: depths.to_vec(), tv, hellinger_bound, nondecreasing });
        }
    }
    Ok(SingularityReport { pairs })
}

/// Result of the best-approximation problem behind extremality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityReport {
    /// `min_c ‖Σ c_i family_i − target‖₂` over probability vectors `c`.
    pub residual: f64,
    pub coefficients: Vec<f64>,
    pub delta: f64,
    /// `residual ≥ delta`.
    pub extremal: bool,
}

/// Equality-constrained least squares on a support via its KKT system.
fn simplex_ls_on_support(family: &[&[f64]], target: &[f64], support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
    let mut rhs = DVector::<f64>::zeros(s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = family[i].iter().zip(family[j]).map(|(x, y)| x * y).sum();
        }
        rhs[a] = family[i].iter().zip(target).map(|(x, y)| x * y).sum();
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    rhs[s] = 1.0;
    let sol = kkt.svd(true, true).solve(&rhs, 1e-14).ok()?;
    let c: Vec<f64> = (0..s).map(|a| sol[a]).collect();
    if c.iter().any(|&x| !x.is_finite() || x < -1e-12) {
        return None;
    }
    let total: f64 = c.iter().map(|x| x.max(0.0)).sum();
    Some(c.into_iter().map(|x| x.max(0.0) / total).collect())
}

fn residual_norm(family: &[&[f64]], target: &[f64], coefficients: &[f64]) -> f64 {
    target
        .iter()
        .enumerate()
        .map(|(w, &t)| {
            let fit: f64 = family.iter().zip(coefficients).map(|(f, c)| c * f[w]).sum();
            (fit - t).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Decides whether `target` is a convex combination of `family` on the
/// tabulated words by solving `min_c ‖Σ c_i family_i − target‖₂` over the
/// probability simplex exactly (every support is tried; the optimum is the
/// equality-constrained optimum on its own support).
pub fn extremality_check(target: &[f64], family: &[&[f64]], delta: f64) -> Result<ExtremalityReport> {
    if family.is_empty() {
        return Ok(ExtremalityReport { residual: f64::INFINITY, coefficients: Vec::new(), delta, extremal: true });
    }
    if family.len() > MAX_FAMILY {
        return Err(Error::InvalidArgument(format!("family of {} exceeds {MAX_FAMILY}", family.len())));
    }
    if family.iter().any(|f| f.len() != target.len()) {
        return Err(Error::DimensionMismatch { expected: target.len(), found: family[0].len() });
    }
    let m = family.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let Some(c) = simplex_ls_on_support(family, target, &support) else { continue };
        let mut full = vec![0.0; m];
        for (&i, &x) in support.iter().zip(&c) {
            full[i] = x;
        }
        let r = residual_norm(family, target, &full);
        if best.as_ref().is_none_or(|(b, _)| r < *b) {
            best = Some((r, full));
        }
    }
    let (residual, coefficients) = best.expect("singleton supports always solve");
    Ok(ExtremalityReport { residual, coefficients, delta, extremal: residual >= delta })
}

/// [`extremality_check`] of every component against all the others.
pub fn extremality_by_label(disintegration: &Disintegration, delta: f64) -> Result<Vec<ExtremalityReport>> {
    let n = disintegration.labels().len();
    (0..n)
        .map(|i| {
            let others: Vec<&[f64]> = (0..n).filter(|&j| j != i).map(|j| disintegration.table(j)).collect();
            extremality_check(disintegration.table(i), &others, delta)
        })
        .collect()
}

/// Weights recovered from the moments `μ_ω(1^k)`, `k = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub moments: Vec<f64>,
    pub weights: Vec<f64>,
    /// 2-norm condition number of `V[k][ν] = p(1|ν)^k`.
    pub condition_number: f64,
}

/// `μ_ω(1^k)` for `k = 0..=N` from the LSW measure.
pub fn moments_from_measure(model: &NdmModel, measure: &HistoryMeasure) -> Result<Vec<f64>> {
    (0..model.labels())
        .map(|k| {
            if k == 0 {
                Ok(1.0)
            } else {
                lsw_probability(measure, &HistoryPrefix::initial(vec![model.one_symbol(); k]))
            }
        })
        .collect()
}

/// Solves `Σ_ν p(1|ν)^k P(ν) = m_k`. The solution is unique exactly when the
/// `p(1|ν)` are distinct, which the model guarantees; the condition number
/// measures how well the moments pin the weights down.
pub fn moment_uniqueness(model: &NdmModel, moments: &[f64]) -> Result<MomentReport> {
    let n = model.labels();
    if moments.len() != n {
        return Err(Error::InvalidArgument(format!("{} moments for {n} labels", moments.len())));
    }
    let v = DMatrix::from_fn(n, n, |k, nu| model.p_one(nu).powi(k as i32));
    let sv = v.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let weights = v
        .lu()
        .solve(&DVector::from_column_slice(moments))
        .ok_or_else(|| Error::InvalidModel("moment system is singular".into()))?;
    Ok(MomentReport { moments: moments.to_vec(), weights: weights.iter().copied().collect(), condition_number })
}
