//! System model: binary state sequences, local sensing channels, Byzantine
//! placements, and report generation.
//!
//! The scenario shared by every other module: `n` peripheral nodes observe a
//! binary state sequence `s = (s_1, ..., s_m)` over `m` epochs. Node `i`
//! forms a local decision `u_ij` that equals `s_j` with probability
//! `1 - epsilon` (local errors are i.i.d. and symmetric). Honest nodes
//! report `r_ij = u_ij`; Byzantine nodes flip each local decision
//! independently with probability `p_mal`, so their reports match the truth
//! with probability `1 - delta`, where
//!
//! ```text
//! delta = epsilon * (1 - p_mal) + (1 - epsilon) * p_mal.
//! ```
//!
//! Which nodes are Byzantine is drawn from a [`ByzantinePrior`]; the fusion
//! center may know that prior exactly, partially, or not at all — the
//! defence modules make that distinction, not this one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior over the binary state sequence.
///
/// `rho` is the probability that consecutive states *differ*:
/// `rho = P(s_j != s_{j-1})`. An i.i.d. equiprobable sequence is the special
/// case `rho = 0.5`, which [`StatePrior::rho`] reports for
/// [`StatePrior::Iid`] as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatePrior {
    /// Independent epochs: each `s_j ~ Bernoulli(p1)` on its own.
    Iid {
        /// Marginal probability of state 1.
        p1: f64,
    },
    /// First-order Markov chain: `s_1 ~ Bernoulli(p1)`, then each state
    /// flips the previous one with probability `rho`.
    Markov {
        /// Flip probability `P(s_j != s_{j-1})`.
        rho: f64,
        /// Initial probability of state 1.
        p1: f64,
    },
}

impl StatePrior {
    /// Independent equiprobable states — the workhorse prior.
    pub fn equiprobable() -> Self {
        StatePrior::Iid { p1: 0.5 }
    }

    /// Independent states with marginal `P(s_j = 1) = p1`.
    pub fn iid(p1: f64) -> Result<Self> {
        check_prob("p1", p1)?;
        Ok(StatePrior::Iid { p1 })
    }

    /// Markov chain with flip probability `rho` and `P(s_1 = 1) = p1`.
    pub fn markov(rho: f64, p1: f64) -> Result<Self> {
        check_prob("rho", rho)?;
        check_prob("p1", p1)?;
        Ok(StatePrior::Markov { rho, p1 })
    }

    /// Flip probability between consecutive epochs (0.5 for i.i.d.).
    pub fn rho(&self) -> f64 {
        match *self {
            StatePrior::Iid { .. } => 0.5,
            StatePrior::Markov { rho, .. } => rho,
        }
    }

    /// Probability that the first state is 1.
    pub fn p1(&self) -> f64 {
        match *self {
            StatePrior::Iid { p1 } | StatePrior::Markov { p1, .. } => p1,
        }
    }

    /// Validate fields after deserialization.
    pub fn validate(&self) -> Result<()> {
        check_prob("p1", self.p1())?;
        check_prob("rho", self.rho())
    }
}

/// A realized binary state sequence of length `m >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateSequence {
    states: Vec<bool>,
}

impl StateSequence {
    /// Wrap a raw bit vector. Fails on an empty sequence.
    pub fn new(states: Vec<bool>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::param("state sequence must have length >= 1"));
        }
        Ok(StateSequence { states })
    }

    /// Build from an integer whose bit `m-1-j` holds `s_j`, i.e. the
    /// sequence read left to right is the big-endian binary expansion.
    /// Sequences then sort lexicographically exactly as the integers do.
    pub fn from_index(index: u64, m: usize) -> Result<Self> {
        if m == 0 || m > 64 {
            return Err(Error::param(format!(
                "from_index supports 1 <= m <= 64, got m = {m}"
            )));
        }
        if m < 64 && index >> m != 0 {
            return Err(Error::param(format!(
                "index {index} does not fit in {m} bits"
            )));
        }
        let states = (0..m).map(|j| (index >> (m - 1 - j)) & 1 == 1).collect();
        Ok(StateSequence { states })
    }

    /// The integer whose big-endian binary expansion is this sequence.
    /// Inverse of [`StateSequence::from_index`]; requires `m <= 64`.
    pub fn to_index(&self) -> Result<u64> {
        let m = self.len();
        if m > 64 {
            return Err(Error::Capacity(format!(
                "to_index supports m <= 64, got m = {m}"
            )));
        }
        let mut idx = 0u64;
        for &s in &self.states {
            idx = (idx << 1) | u64::from(s);
        }
        Ok(idx)
    }

    /// Number of epochs `m`.
    #[allow(clippy::len_without_is_empty)] // cannot be empty by construction
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// The sequence as a bit slice.
    pub fn as_slice(&self) -> &[bool] {
        &self.states
    }

    /// State at epoch `j` (0-based).
    pub fn get(&self, j: usize) -> bool {
        self.states[j]
    }

    /// The epoch-wise complement.
    pub fn complement(&self) -> Self {
        StateSequence {
            states: self.states.iter().map(|s| !s).collect(),
        }
    }

    /// Number of epochs on which `self` and `other` disagree.
    pub fn hamming_distance(&self, other: &StateSequence) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::mismatch(format!(
                "sequence lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .filter(|(a, b)| a != b)
            .count())
    }
}

impl std::ops::Index<usize> for StateSequence {
    type Output = bool;
    fn index(&self, j: usize) -> &bool {
        &self.states[j]
    }
}

/// Per-node report channel: local error rate and malicious flip rate.
///
/// `delta` is derived, never stored, so the struct cannot go out of sync.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalChannel {
    epsilon: f64,
    p_mal: f64,
}

impl LocalChannel {
    /// Channel with local error rate `epsilon in [0, 1)` and Byzantine flip
    /// probability `p_mal in [0, 1]`.
    pub fn new(epsilon: f64, p_mal: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::param(format!(
                "epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        check_prob("p_mal", p_mal)?;
        Ok(LocalChannel { epsilon, p_mal })
    }

    /// Local decision error rate.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Probability that a Byzantine node flips a given local decision.
    pub fn p_mal(&self) -> f64 {
        self.p_mal
    }

    /// Effective error rate of a Byzantine node's report against the truth:
    /// `delta = epsilon (1 - p_mal) + (1 - epsilon) p_mal`.
    pub fn delta(&self) -> f64 {
        self.epsilon * (1.0 - self.p_mal) + (1.0 - self.epsilon) * self.p_mal
    }
}

/// Prior knowledge about how many nodes are Byzantine and where they sit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ByzantinePrior {
    /// Each node is independently Byzantine with probability `alpha`.
    IndependentAlpha { alpha: f64 },
    /// Exactly `n_b` of the `n` nodes are Byzantine, uniformly placed.
    FixedCount { n_b: usize },
    /// Maximum-entropy prior under the bound "strictly fewer than `h`
    /// Byzantines": placement sets of size `k < h` weighted uniformly,
    /// i.e. `P(|B| = k) = C(n, k) / sum_{j < h} C(n, j)`.
    BoundedMaxEnt { h: usize },
    /// No information at all; equivalent to `IndependentAlpha { alpha: 0.5 }`.
    Unconstrained,
}

impl ByzantinePrior {
    /// Check the prior's parameters against a concrete network size.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::param("network size n must be >= 1"));
        }
        match *self {
            ByzantinePrior::IndependentAlpha { alpha } => check_prob("alpha", alpha),
            ByzantinePrior::FixedCount { n_b } => {
                if n_b > n {
                    Err(Error::param(format!(
                        "fixed Byzantine count n_b = {n_b} exceeds n = {n}"
                    )))
                } else {
                    Ok(())
                }
            }
            ByzantinePrior::BoundedMaxEnt { h } => {
                if h == 0 || h > n {
                    Err(Error::param(format!(
                        "bounded-count parameter must satisfy 1 <= h <= n, got h = {h}, n = {n}"
                    )))
                } else {
                    Ok(())
                }
            }
            ByzantinePrior::Unconstrained => Ok(()),
        }
    }

    /// Marginal probability that any single node is Byzantine.
    ///
    /// For the bounded prior this is `E[|B|] / n` with
    /// `E[|B|] = sum_{k<h} k C(n,k) / sum_{k<h} C(n,k)` — the exchangeable
    /// marginal, useful when a defence needs a scalar contamination level.
    pub fn marginal_alpha(&self, n: usize) -> Result<f64> {
        self.validate_for(n)?;
        Ok(match *self {
            ByzantinePrior::IndependentAlpha { alpha } => alpha,
            ByzantinePrior::FixedCount { n_b } => n_b as f64 / n as f64,
            ByzantinePrior::BoundedMaxEnt { h } => {
                let w = bounded_count_weights(n, h);
                let mean: f64 = w.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                mean / n as f64
            }
            ByzantinePrior::Unconstrained => 0.5,
        })
    }
}

/// Normalized distribution over the Byzantine count `k = 0..h-1` under the
/// bounded maximum-entropy prior: `P(k) = C(n,k) / sum_{j<h} C(n,j)`.
///
/// Computed through log-binomials so it stays finite for any `n` a
/// simulation would use.
pub(crate) fn bounded_count_weights(n: usize, h: usize) -> Vec<f64> {
    let log_c: Vec<f64> = (0..h)
        .map(|k| statrs::function::factorial::ln_binomial(n as u64, k as u64))
        .collect();
    let max = log_c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_c.iter().map(|&lc| (lc - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|w| w / total).collect()
}

/// Which nodes are Byzantine (`true`) in one trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Placement {
    flags: Vec<bool>,
}

impl Placement {
    /// Wrap explicit per-node flags. Fails on an empty network.
    pub fn new(flags: Vec<bool>) -> Result<Self> {
        if flags.is_empty() {
            return Err(Error::param("placement must cover at least one node"));
        }
        Ok(Placement { flags })
    }

    /// All-honest placement of size `n`.
    pub fn all_honest(n: usize) -> Result<Self> {
        Placement::new(vec![false; n])
    }

    /// Network size.
    pub fn n(&self) -> usize {
        self.flags.len()
    }

    /// Per-node flags; `true` marks a Byzantine node.
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Whether node `i` is Byzantine.
    pub fn is_byzantine(&self, i: usize) -> bool {
        self.flags[i]
    }

    /// Number of Byzantine nodes.
    pub fn count_byzantine(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }
}

/// Every node's reports over a whole observation window, together with the
/// ground truth that generated them (kept for scoring; no decision rule in
/// this crate reads it).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMatrix {
    n: usize,
    m: usize,
    /// Row-major `n x m` bits: `bits[i * m + j]` is node `i`'s report at
    /// epoch `j`.
    bits: Vec<bool>,
    truth: StateSequence,
    placement: Placement,
}

impl ReportMatrix {
    /// Assemble a matrix from parts, checking dimensional consistency.
    pub fn new(
        bits: Vec<bool>,
        n: usize,
        m: usize,
        truth: StateSequence,
        placement: Placement,
    ) -> Result<Self> {
        if bits.len() != n * m {
            return Err(Error::mismatch(format!(
                "report bits length {} != n*m = {}",
                bits.len(),
                n * m
            )));
        }
        if truth.len() != m {
            return Err(Error::mismatch(format!(
                "truth length {} != m = {m}",
                truth.len()
            )));
        }
        if placement.n() != n {
            return Err(Error::mismatch(format!(
                "placement size {} != n = {n}",
                placement.n()
            )));
        }
        if n == 0 || m == 0 {
            return Err(Error::param("report matrix requires n >= 1 and m >= 1"));
        }
        Ok(ReportMatrix {
            n,
            m,
            bits,
            truth,
            placement,
        })
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of epochs.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Node `i`'s report at epoch `j`.
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.m + j]
    }

    /// Node `i`'s full report row.
    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.m..(i + 1) * self.m]
    }

    /// Epoch `j`'s reports across nodes, as an owned column.
    pub fn column(&self, j: usize) -> Vec<bool> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// The state sequence that generated the reports.
    pub fn truth(&self) -> &StateSequence {
        &self.truth
    }

    /// The Byzantine placement of this trial.
    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    /// Node `i`'s row packed into a `u64` (bit `m-1-j` holds `r_ij`),
    /// matching [`StateSequence::to_index`] so `XOR` + popcount gives the
    /// number of disagreements. Requires `m <= 64`.
    pub fn row_mask(&self, i: usize) -> Result<u64> {
        if self.m > 64 {
            return Err(Error::Capacity(format!(
                "row_mask supports m <= 64, got m = {}",
                self.m
            )));
        }
        let mut mask = 0u64;
        for &b in self.row(i) {
            mask = (mask << 1) | u64::from(b);
        }
        Ok(mask)
    }
}

/// How sequence-level errors are counted by Monte-Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Fraction of wrongly decided epochs (errors / (trials * m)).
    #[default]
    PerBit,
    /// Fraction of trials with at least one wrongly decided epoch.
    PerSequence,
}

/// A complete generative scenario: network size, window length, channel
/// noise, and the priors over states and Byzantine placement.
///
/// `p_mal` is deliberately *not* part of the setup — it is the attacker's
/// strategy, supplied per estimate so game drivers can sweep it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSetup {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub state_prior: StatePrior,
    pub byz_prior: ByzantinePrior,
}

impl DetectionSetup {
    /// Validate all cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::param("setup requires n >= 1 and m >= 1"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::param(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        self.state_prior.validate()?;
        self.byz_prior.validate_for(self.n)
    }
}

/// Draw a state sequence of length `m` from `prior`.
pub fn sample_states<R: Rng + ?Sized>(
    prior: &StatePrior,
    m: usize,
    rng: &mut R,
) -> Result<StateSequence> {
    if m == 0 {
        return Err(Error::param("cannot sample a zero-length state sequence"));
    }
    prior.validate()?;
    let mut states = Vec::with_capacity(m);
    let first = rng.random::<f64>() < prior.p1();
    states.push(first);
    match *prior {
        StatePrior::Iid { p1 } => {
            for _ in 1..m {
                states.push(rng.random::<f64>() < p1);
            }
        }
        StatePrior::Markov { rho, .. } => {
            for j in 1..m {
                let flip = rng.random::<f64>() < rho;
                states.push(states[j - 1] ^ flip);
            }
        }
    }
    StateSequence::new(states)
}

/// Draw a Byzantine placement over `n` nodes from `prior`.
pub fn sample_placement<R: Rng + ?Sized>(
    prior: &ByzantinePrior,
    n: usize,
    rng: &mut R,
) -> Result<Placement> {
    prior.validate_for(n)?;
    let flags = match *prior {
        ByzantinePrior::IndependentAlpha { alpha } => {
            (0..n).map(|_| rng.random::<f64>() < alpha).collect()
        }
        ByzantinePrior::Unconstrained => (0..n).map(|_| rng.random::<f64>() < 0.5).collect(),
        ByzantinePrior::FixedCount { n_b } => random_subset_flags(n, n_b, rng),
        ByzantinePrior::BoundedMaxEnt { h } => {
            let weights = bounded_count_weights(n, h);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut count = h - 1; // fallback guards rounding at u ~ 1.0
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    count = k;
                    break;
                }
            }
            random_subset_flags(n, count, rng)
        }
    };
    Placement::new(flags)
}

/// Mark a uniformly random `k`-subset of `n` nodes (partial Fisher-Yates).
fn random_subset_flags<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    for pos in 0..k {
        let swap = rng.random_range(pos..n);
        idx.swap(pos, swap);
    }
    let mut flags = vec![false; n];
    for &i in &idx[..k] {
        flags[i] = true;
    }
    flags
}

/// Generate one trial's report matrix.
///
/// Each node first forms a local decision `u_ij = s_j XOR Bernoulli(epsilon)`;
/// Byzantine nodes then flip it with probability `p_mal`. Draw order is
/// fixed (nodes outer, epochs inner, local-error uniform before flip
/// uniform), so for a fixed RNG state the reports for two values of `p_mal`
/// are *coupled*: a larger `p_mal` can only add flips. Game drivers rely on
/// this common-random-numbers property.
pub fn generate_reports<R: Rng + ?Sized>(
    states: &StateSequence,
    placement: &Placement,
    channel: &LocalChannel,
    rng: &mut R,
) -> Result<ReportMatrix> {
    let n = placement.n();
    let m = states.len();
    let mut bits = Vec::with_capacity(n * m);
    for i in 0..n {
        let byz = placement.is_byzantine(i);
        for j in 0..m {
            let local_err = rng.random::<f64>() < channel.epsilon();
            let mut r = states.get(j) ^ local_err;
            if byz {
                let flip = rng.random::<f64>() < channel.p_mal();
                r ^= flip;
            }
            bits.push(r);
        }
    }
    ReportMatrix::new(bits, n, m, states.clone(), placement.clone())
}

/// Likelihood of observing report `r` when the epoch state is `s`:
/// `1 - epsilon` / `epsilon` for an honest node, `1 - delta` / `delta` for a
/// Byzantine one.
pub fn report_likelihood(r: bool, s: bool, byzantine: bool, channel: &LocalChannel) -> f64 {
    let err = if byzantine {
        channel.delta()
    } else {
        channel.epsilon()
    };
    if r == s {
        1.0 - err
    } else {
        err
    }
}

/// Number of epochs on which a report row agrees with a candidate sequence.
pub fn match_count(row: &[bool], states: &StateSequence) -> Result<usize> {
    if row.len() != states.len() {
        return Err(Error::mismatch(format!(
            "report row has {} epochs but candidate has {}",
            row.len(),
            states.len()
        )));
    }
    Ok(row
        .iter()
        .zip(states.as_slice())
        .filter(|(r, s)| r == s)
        .count())
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be a probability in [0, 1], got {v}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{streams, trial_rng};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn delta_formula() {
        let ch = LocalChannel::new(0.1, 1.0).unwrap();
        assert_abs_diff_eq!(ch.delta(), 0.9, epsilon = 1e-15);
        let ch = LocalChannel::new(0.1, 0.5).unwrap();
        assert_abs_diff_eq!(ch.delta(), 0.5, epsilon = 1e-15);
        let ch = LocalChannel::new(0.2, 0.0).unwrap();
        assert_abs_diff_eq!(ch.delta(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn report_likelihood_cases() {
        let ch = LocalChannel::new(0.1, 1.0).unwrap();
        // Honest: matches with 1 - epsilon.
        assert_abs_diff_eq!(report_likelihood(true, true, false, &ch), 0.9);
        assert_abs_diff_eq!(report_likelihood(false, true, false, &ch), 0.1);
        // Byzantine with p_mal = 1: matches with 1 - delta = 0.1.
        assert_abs_diff_eq!(report_likelihood(true, true, true, &ch), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(report_likelihood(false, true, true, &ch), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn sequence_index_round_trip() {
        for idx in 0..16u64 {
            let s = StateSequence::from_index(idx, 4).unwrap();
            assert_eq!(s.to_index().unwrap(), idx);
        }
        // Lexicographic order of sequences == integer order of indices.
        let a = StateSequence::from_index(3, 4).unwrap(); // 0011
        let b = StateSequence::from_index(4, 4).unwrap(); // 0100
        assert!(a.as_slice() < b.as_slice());
    }

    #[test]
    fn fixed_count_placement_is_exact() {
        let mut rng = trial_rng(1, streams::PLACEMENT, 0);
        for _ in 0..50 {
            let p = sample_placement(&ByzantinePrior::FixedCount { n_b: 7 }, 20, &mut rng).unwrap();
            assert_eq!(p.count_byzantine(), 7);
        }
    }

    /// Bounded maximum-entropy prior, h = 2, n = 3: the count distribution
    /// is P(0) = C(3,0)/(C(3,0)+C(3,1)) = 1/4 and P(1) = 3/4.
    #[test]
    fn bounded_maxent_count_distribution() {
        let w = bounded_count_weights(3, 2);
        assert_abs_diff_eq!(w[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.75, epsilon = 1e-12);

        let prior = ByzantinePrior::BoundedMaxEnt { h: 2 };
        let mut rng = trial_rng(2, streams::PLACEMENT, 0);
        let trials = 40_000;
        let mut ones = 0usize;
        for _ in 0..trials {
            let p = sample_placement(&prior, 3, &mut rng).unwrap();
            let k = p.count_byzantine();
            assert!(k < 2);
            ones += k;
        }
        // 3 sigma for a Bernoulli(0.75) over 40k draws is ~0.0065.
        assert_abs_diff_eq!(ones as f64 / trials as f64, 0.75, epsilon = 0.01);
    }

    #[test]
    fn bounded_maxent_marginal_alpha() {
        // n = 3, h = 2: E[K] = 0*1/4 + 1*3/4 => alpha = 0.25.
        let prior = ByzantinePrior::BoundedMaxEnt { h: 2 };
        assert_abs_diff_eq!(prior.marginal_alpha(3).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn markov_flip_rate_matches_rho() {
        let prior = StatePrior::markov(0.95, 0.5).unwrap();
        let mut rng = trial_rng(3, streams::STATES, 0);
        let s = sample_states(&prior, 100_000, &mut rng).unwrap();
        let flips = s
            .as_slice()
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count();
        assert_abs_diff_eq!(flips as f64 / 99_999.0, 0.95, epsilon = 0.01);
    }

    #[test]
    fn honest_reports_match_truth_at_rate_one_minus_epsilon() {
        let states = StateSequence::new(vec![true; 10_000]).unwrap();
        let placement = Placement::all_honest(1).unwrap();
        let ch = LocalChannel::new(0.15, 1.0).unwrap();
        let mut rng = trial_rng(4, streams::REPORTS, 0);
        let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
        let matches = match_count(reports.row(0), &states).unwrap();
        assert_abs_diff_eq!(matches as f64 / 10_000.0, 0.85, epsilon = 0.02);
    }

    #[test]
    fn byzantine_reports_match_truth_at_rate_one_minus_delta() {
        let states = StateSequence::new(vec![false; 10_000]).unwrap();
        let placement = Placement::new(vec![true]).unwrap();
        let ch = LocalChannel::new(0.1, 0.8).unwrap(); // delta = 0.74
        let mut rng = trial_rng(5, streams::REPORTS, 0);
        let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
        let matches = match_count(reports.row(0), &states).unwrap();
        assert_abs_diff_eq!(matches as f64 / 10_000.0, 1.0 - ch.delta(), epsilon = 0.02);
    }

    #[test]
    fn row_mask_agrees_with_match_count() {
        let mut rng = trial_rng(6, streams::REPORTS, 0);
        let states = sample_states(&StatePrior::equiprobable(), 12, &mut rng).unwrap();
        let placement =
            sample_placement(&ByzantinePrior::IndependentAlpha { alpha: 0.4 }, 5, &mut rng)
                .unwrap();
        let ch = LocalChannel::new(0.2, 0.9).unwrap();
        let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
        let truth_mask = states.to_index().unwrap();
        for i in 0..5 {
            let mask = reports.row_mask(i).unwrap();
            let mismatches = (mask ^ truth_mask).count_ones() as usize;
            assert_eq!(
                12 - mismatches,
                match_count(reports.row(i), &states).unwrap()
            );
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(LocalChannel::new(1.0, 0.5).is_err());
        assert!(LocalChannel::new(-0.1, 0.5).is_err());
        assert!(LocalChannel::new(0.1, 1.5).is_err());
        assert!(StatePrior::iid(1.2).is_err());
        assert!(StateSequence::new(vec![]).is_err());
        assert!(ByzantinePrior::FixedCount { n_b: 4 }.validate_for(3).is_err());
        assert!(ByzantinePrior::BoundedMaxEnt { h: 0 }.validate_for(3).is_err());
        assert!(ByzantinePrior::BoundedMaxEnt { h: 4 }.validate_for(3).is_err());
    }

    proptest! {
        /// Placement under the bounded prior always respects the bound.
        #[test]
        fn prop_bounded_placement_respects_bound(
            n in 1usize..40, h_off in 0usize..40, seed in 0u64..1000
        ) {
            let h = 1 + h_off % n.max(1);
            prop_assume!(h <= n);
            let mut rng = trial_rng(seed, streams::PLACEMENT, 0);
            let p = sample_placement(&ByzantinePrior::BoundedMaxEnt { h }, n, &mut rng).unwrap();
            prop_assert!(p.count_byzantine() < h);
        }

        /// delta is a probability and collapses correctly at the endpoints.
        #[test]
        fn prop_delta_in_unit_interval(eps in 0.0f64..0.999, p in 0.0f64..=1.0) {
            let ch = LocalChannel::new(eps, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&ch.delta()));
        }

        /// Generated matrices have consistent dimensions and recorded truth.
        #[test]
        fn prop_generated_reports_consistent(
            n in 1usize..10, m in 1usize..12, seed in 0u64..500
        ) {
            let mut rng = trial_rng(seed, streams::REPORTS, 0);
            let states = sample_states(&StatePrior::equiprobable(), m, &mut rng).unwrap();
            let placement = sample_placement(
                &ByzantinePrior::IndependentAlpha { alpha: 0.3 }, n, &mut rng).unwrap();
            let ch = LocalChannel::new(0.1, 0.7).unwrap();
            let r = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            prop_assert_eq!(r.n(), n);
            prop_assert_eq!(r.m(), m);
            prop_assert_eq!(r.truth(), &states);
            for i in 0..n {
                prop_assert_eq!(r.row(i).len(), m);
            }
        }
    }
}
