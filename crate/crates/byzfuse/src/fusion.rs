//! Hard decision fusion at the center: counting rules and the weighted
//! log-likelihood-ratio rule.
//!
//! A counting rule fuses one epoch's reports `u_1..u_n` into a single bit by
//! comparing the number of ones against a threshold: AND (`k = n`), OR
//! (`k = 1`), general k-out-of-n, and majority. Majority is k-out-of-n with
//! the smallest `k` such that `2k > n`, so an exact half-split on an even
//! committee decides 0.
//!
//! For sensors with known, possibly heterogeneous performance
//! `(P_d_i, P_fa_i)`, the optimal rule under conditionally independent
//! reports is a weighted vote: decide 1 iff
//!
//! ```text
//! sum_i [ u_i * ln((1 - P_md_i)/P_fa_i) + (1 - u_i) * ln(P_md_i/(1 - P_fa_i)) ]
//!     >= ln(P(H0)/P(H1))
//! ```
//!
//! with `P_md_i = 1 - P_d_i` ([`chair_varshney`]). Equality decides 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A counting fusion rule over one epoch's reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum VotingRule {
    /// Decide 1 only if every node reports 1.
    And,
    /// Decide 1 if any node reports 1.
    Or,
    /// Decide 1 iff at least `k` nodes report 1.
    KOutOfN { k: usize },
    /// Decide 1 iff strictly more than half the nodes report 1.
    Majority,
}

impl VotingRule {
    /// The count threshold this rule applies over `n` nodes: the decision is
    /// 1 iff at least `threshold` nodes report 1.
    pub fn threshold(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::param("voting requires at least one node"));
        }
        match *self {
            VotingRule::And => Ok(n),
            VotingRule::Or => Ok(1),
            VotingRule::KOutOfN { k } => {
                if k == 0 || k > n {
                    Err(Error::param(format!(
                        "k-out-of-n threshold must satisfy 1 <= k <= n, got k = {k}, n = {n}"
                    )))
                } else {
                    Ok(k)
                }
            }
            VotingRule::Majority => Ok(n / 2 + 1),
        }
    }
}

/// Fuse one epoch's reports with a counting rule.
pub fn vote(rule: &VotingRule, column: &[bool]) -> Result<bool> {
    let threshold = rule.threshold(column.len())?;
    let ones = column.iter().filter(|&&u| u).count();
    Ok(ones >= threshold)
}

/// Per-node detection/false-alarm performance, indexed like the report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePerformance {
    p_d: Vec<f64>,
    p_fa: Vec<f64>,
}

impl NodePerformance {
    /// Explicit per-node `(P_d, P_fa)` vectors of equal length `n >= 1`.
    pub fn new(p_d: Vec<f64>, p_fa: Vec<f64>) -> Result<Self> {
        if p_d.is_empty() || p_d.len() != p_fa.len() {
            return Err(Error::mismatch(format!(
                "need matching non-empty P_d/P_fa vectors, got lengths {} and {}",
                p_d.len(),
                p_fa.len()
            )));
        }
        for (name, v) in [("P_d", &p_d), ("P_fa", &p_fa)] {
            if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::param(format!(
                    "{name} entries must be probabilities, got {bad}"
                )));
            }
        }
        Ok(NodePerformance { p_d, p_fa })
    }

    /// All `n` nodes share the same `(P_d, P_fa)`.
    pub fn homogeneous(n: usize, p_d: f64, p_fa: f64) -> Result<Self> {
        NodePerformance::new(vec![p_d; n], vec![p_fa; n])
    }

    /// The symmetric-error special case `P_d = 1 - epsilon`,
    /// `P_fa = epsilon` shared by all `n` nodes.
    pub fn symmetric(n: usize, epsilon: f64) -> Result<Self> {
        NodePerformance::homogeneous(n, 1.0 - epsilon, epsilon)
    }

    /// Number of nodes covered.
    pub fn n(&self) -> usize {
        self.p_d.len()
    }

    /// Per-node detection probabilities.
    pub fn p_d(&self) -> &[f64] {
        &self.p_d
    }

    /// Per-node false-alarm probabilities.
    pub fn p_fa(&self) -> &[f64] {
        &self.p_fa
    }

    /// Whether every node shares the same `(P_d, P_fa)`.
    pub fn is_homogeneous(&self) -> bool {
        self.p_d.windows(2).all(|w| w[0] == w[1]) && self.p_fa.windows(2).all(|w| w[0] == w[1])
    }
}

/// System-level performance of a fused decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPerformance {
    /// Probability the fused decision is 1 under H1.
    pub q_d: f64,
    /// Probability the fused decision is 1 under H0.
    pub q_fa: f64,
}

/// Exact system-level `(Q_d, Q_fa)` of a counting rule over conditionally
/// independent sensors.
///
/// AND and OR admit product forms for arbitrary heterogeneous sensors.
/// General k-out-of-n (and majority) is provided in closed form for
/// homogeneous sensors — the binomial tail
/// `Q(p) = sum_{i=k}^{n} C(n,i) p^i (1-p)^(n-i)` — and returns
/// [`Error::Unsupported`] otherwise.
pub fn analytic_performance(rule: &VotingRule, perf: &NodePerformance) -> Result<GlobalPerformance> {
    let n = perf.n();
    let threshold = rule.threshold(n)?;
    match *rule {
        VotingRule::And => Ok(GlobalPerformance {
            q_d: perf.p_d().iter().product(),
            q_fa: perf.p_fa().iter().product(),
        }),
        VotingRule::Or => Ok(GlobalPerformance {
            q_d: 1.0 - perf.p_d().iter().map(|p| 1.0 - p).product::<f64>(),
            q_fa: 1.0 - perf.p_fa().iter().map(|p| 1.0 - p).product::<f64>(),
        }),
        VotingRule::KOutOfN { .. } | VotingRule::Majority => {
            if !perf.is_homogeneous() {
                return Err(Error::Unsupported(
                    "analytic k-out-of-n performance requires homogeneous sensors".into(),
                ));
            }
            Ok(GlobalPerformance {
                q_d: binomial_upper_tail(n, threshold, perf.p_d()[0]),
                q_fa: binomial_upper_tail(n, threshold, perf.p_fa()[0]),
            })
        }
    }
}

/// `P(Binomial(n, p) >= k)`, evaluated term-by-term in the log domain.
pub(crate) fn binomial_upper_tail(n: usize, k: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return if k <= n { 1.0 } else { 0.0 };
    }
    let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
    let sum: f64 = (k..=n)
        .map(|i| {
            let ln_c = statrs::function::factorial::ln_binomial(n as u64, i as u64);
            (ln_c + i as f64 * ln_p + (n - i) as f64 * ln_q).exp()
        })
        .sum();
    sum.min(1.0)
}

/// Optimal weighted log-likelihood-ratio fusion of one epoch's reports.
///
/// Decides 1 iff the weighted sum meets or exceeds `prior_ratio_log =
/// ln(P(H0)/P(H1))`; equality decides 1. Requires every `P_d`, `P_fa`
/// strictly inside `(0, 1)` so the weights are finite.
pub fn chair_varshney(
    column: &[bool],
    perf: &NodePerformance,
    prior_ratio_log: f64,
) -> Result<bool> {
    if column.len() != perf.n() {
        return Err(Error::mismatch(format!(
            "column has {} reports but performance covers {} nodes",
            column.len(),
            perf.n()
        )));
    }
    let mut statistic = 0.0;
    for (i, &u) in column.iter().enumerate() {
        let (p_d, p_fa) = (perf.p_d()[i], perf.p_fa()[i]);
        if !(p_d > 0.0 && p_d < 1.0 && p_fa > 0.0 && p_fa < 1.0) {
            return Err(Error::param(format!(
                "node {i} has degenerate performance (P_d = {p_d}, P_fa = {p_fa}); \
                 weights require values strictly inside (0, 1)"
            )));
        }
        let p_md = 1.0 - p_d;
        statistic += if u {
            ((1.0 - p_md) / p_fa).ln()
        } else {
            (p_md / (1.0 - p_fa)).ln()
        };
    }
    Ok(statistic >= prior_ratio_log)
}

/// Real-valued optimal threshold `l*` for a k-out-of-n rule over `n`
/// exchangeable sensors whose reports are 1 with probability `p10` under H0
/// and `p11` under H1:
///
/// ```text
/// l* = ln[ (prior0/(1-prior0)) * ((1-p10)/(1-p11))^n ]
///      / ln[ p11 (1-p10) / (p10 (1-p11)) ]
/// ```
///
/// Deciding 1 iff at least `ceil(l*)` ones are observed minimizes the error
/// probability. Requires `0 < p10 < p11 < 1` so the log-likelihood ratio is
/// strictly increasing in the count. For the symmetric equal-prior case
/// (`p11 = 1 - p10`, `prior0 = 0.5`) this reduces to `n/2`.
pub fn optimal_intermediate_threshold(
    n: usize,
    p10: f64,
    p11: f64,
    prior0: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("threshold requires n >= 1"));
    }
    if !(p10 > 0.0 && p11 < 1.0 && p10 < p11) {
        return Err(Error::param(format!(
            "need 0 < p10 < p11 < 1, got p10 = {p10}, p11 = {p11}"
        )));
    }
    if !(prior0 > 0.0 && prior0 < 1.0) {
        return Err(Error::param(format!(
            "prior0 must lie strictly inside (0, 1), got {prior0}"
        )));
    }
    let num = (prior0 / (1.0 - prior0)).ln() + n as f64 * ((1.0 - p10) / (1.0 - p11)).ln();
    let den = (p11 * (1.0 - p10) / (p10 * (1.0 - p11))).ln();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Exhaustive-enumeration oracle: exact P(fused = 1) for independent
    /// sensors where sensor `i` reports 1 with probability `p[i]`.
    fn enumeration_oracle(rule: &VotingRule, p: &[f64]) -> f64 {
        let n = p.len();
        let threshold = rule.threshold(n).unwrap();
        let mut total = 0.0;
        for pattern in 0u32..(1 << n) {
            let mut prob = 1.0;
            let mut ones = 0;
            for (i, &pi) in p.iter().enumerate() {
                if pattern >> i & 1 == 1 {
                    prob *= pi;
                    ones += 1;
                } else {
                    prob *= 1.0 - pi;
                }
            }
            if ones >= threshold {
                total += prob;
            }
        }
        total
    }

    #[test]
    fn two_out_of_three_detection() {
        // 2-of-3 with P_d = 0.9 per node: Q_d = 3(0.81)(0.1) + 0.729 = 0.972.
        let perf = NodePerformance::homogeneous(3, 0.9, 0.1).unwrap();
        let g = analytic_performance(&VotingRule::KOutOfN { k: 2 }, &perf).unwrap();
        assert_abs_diff_eq!(g.q_d, 0.972, epsilon = 1e-12);
    }

    #[test]
    fn and_or_products() {
        let perf = NodePerformance::homogeneous(3, 0.9, 0.1).unwrap();
        let and = analytic_performance(&VotingRule::And, &perf).unwrap();
        assert_abs_diff_eq!(and.q_d, 0.729, epsilon = 1e-12);
        assert_abs_diff_eq!(and.q_fa, 0.001, epsilon = 1e-12);
        let or = analytic_performance(&VotingRule::Or, &perf).unwrap();
        assert_abs_diff_eq!(or.q_d, 0.999, epsilon = 1e-12);
        assert_abs_diff_eq!(or.q_fa, 0.271, epsilon = 1e-12);
    }

    #[test]
    fn majority_breaks_even_split_towards_zero() {
        // 2 ones out of 4 is not a strict majority.
        assert!(!vote(&VotingRule::Majority, &[true, true, false, false]).unwrap());
        assert!(vote(&VotingRule::Majority, &[true, true, true, false]).unwrap());
        // Odd committee: plain majority.
        assert!(vote(&VotingRule::Majority, &[true, true, false]).unwrap());
    }

    #[test]
    fn vote_edge_rules() {
        assert!(vote(&VotingRule::Or, &[false, false, true]).unwrap());
        assert!(!vote(&VotingRule::And, &[true, true, false]).unwrap());
        assert!(vote(&VotingRule::And, &[true, true]).unwrap());
        assert!(vote(&VotingRule::KOutOfN { k: 1 }, &[true]).unwrap());
        assert!(vote(&VotingRule::KOutOfN { k: 4 }, &[true; 3]).is_err());
        assert!(vote(&VotingRule::Majority, &[]).is_err());
    }

    #[test]
    fn heterogeneous_k_out_of_n_unsupported() {
        let perf = NodePerformance::new(vec![0.9, 0.8], vec![0.1, 0.2]).unwrap();
        assert!(matches!(
            analytic_performance(&VotingRule::KOutOfN { k: 1 }, &perf),
            Err(Error::Unsupported(_))
        ));
        // ...but AND/OR handle heterogeneous sensors exactly.
        let and = analytic_performance(&VotingRule::And, &perf).unwrap();
        assert_abs_diff_eq!(and.q_d, 0.72, epsilon = 1e-12);
    }

    #[test]
    fn chair_varshney_reduces_to_majority_for_symmetric_sensors() {
        // Equal (P_d, P_fa) = (0.9, 0.1): all weights are +/- ln 9, so the
        // rule is a majority vote with ties deciding 1.
        let perf = NodePerformance::symmetric(4, 0.1).unwrap();
        assert!(chair_varshney(&[true, true, false, false], &perf, 0.0).unwrap());
        assert!(!chair_varshney(&[true, false, false, false], &perf, 0.0).unwrap());
        assert!(chair_varshney(&[true, true, true, false], &perf, 0.0).unwrap());
    }

    #[test]
    fn chair_varshney_weights_reliable_nodes_higher() {
        // Node 0 is near-perfect and says 1; nodes 1-2 are noisy and say 0.
        let perf = NodePerformance::new(vec![0.99, 0.6, 0.6], vec![0.01, 0.4, 0.4]).unwrap();
        assert!(chair_varshney(&[true, false, false], &perf, 0.0).unwrap());
        // Flip roles: the reliable node's 0 outvotes two noisy 1s.
        assert!(!chair_varshney(&[false, true, true], &perf, 0.0).unwrap());
    }

    #[test]
    fn chair_varshney_rejects_degenerate_performance() {
        let perf = NodePerformance::homogeneous(2, 1.0, 0.1).unwrap();
        assert!(chair_varshney(&[true, false], &perf, 0.0).is_err());
    }

    #[test]
    fn symmetric_threshold_is_half_n() {
        let l = optimal_intermediate_threshold(100, 0.2, 0.8, 0.5).unwrap();
        assert_abs_diff_eq!(l, 50.0, epsilon = 1e-9);
        let l = optimal_intermediate_threshold(7, 0.1, 0.9, 0.5).unwrap();
        assert_abs_diff_eq!(l, 3.5, epsilon = 1e-9);
    }

    #[test]
    fn asymmetric_threshold_shifts_with_prior() {
        // Raising the H0 prior demands more ones before deciding 1.
        let lo = optimal_intermediate_threshold(10, 0.2, 0.8, 0.3).unwrap();
        let hi = optimal_intermediate_threshold(10, 0.2, 0.8, 0.7).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn threshold_rejects_bad_inputs() {
        assert!(optimal_intermediate_threshold(0, 0.2, 0.8, 0.5).is_err());
        assert!(optimal_intermediate_threshold(5, 0.8, 0.2, 0.5).is_err());
        assert!(optimal_intermediate_threshold(5, 0.0, 0.8, 0.5).is_err());
        assert!(optimal_intermediate_threshold(5, 0.2, 0.8, 0.0).is_err());
    }

    proptest! {
        /// Closed forms match the exhaustive-enumeration oracle.
        #[test]
        fn prop_analytic_matches_enumeration(
            n in 1usize..9,
            p in 0.01f64..0.99,
            k_sel in 0usize..8,
        ) {
            let perf = NodePerformance::homogeneous(n, p, p).unwrap();
            let probs = vec![p; n];
            let k = 1 + k_sel % n;
            for rule in [
                VotingRule::And,
                VotingRule::Or,
                VotingRule::Majority,
                VotingRule::KOutOfN { k },
            ] {
                let got = analytic_performance(&rule, &perf).unwrap();
                let want = enumeration_oracle(&rule, &probs);
                prop_assert!((got.q_d - want).abs() < 1e-10,
                    "rule {rule:?}: {} vs {want}", got.q_d);
            }
        }

        /// AND/OR closed forms also match enumeration for heterogeneous nodes.
        #[test]
        fn prop_and_or_heterogeneous_match_enumeration(
            p in proptest::collection::vec(0.01f64..0.99, 1..8)
        ) {
            let perf = NodePerformance::new(p.clone(), p.clone()).unwrap();
            for rule in [VotingRule::And, VotingRule::Or] {
                let got = analytic_performance(&rule, &perf).unwrap();
                let want = enumeration_oracle(&rule, &p);
                prop_assert!((got.q_d - want).abs() < 1e-10);
            }
        }

        /// Majority is k-out-of-n with k = floor(n/2) + 1.
        #[test]
        fn prop_majority_equals_k_out_of_n(
            col in proptest::collection::vec(any::<bool>(), 1..20)
        ) {
            let n = col.len();
            let majority = vote(&VotingRule::Majority, &col).unwrap();
            let k = n / 2 + 1;
            let kofn = vote(&VotingRule::KOutOfN { k }, &col).unwrap();
            prop_assert_eq!(majority, kofn);
        }

        /// Counting rules are monotone: adding a 1 never turns the fused
        /// decision from 1 to 0.
        #[test]
        fn prop_vote_monotone(
            col in proptest::collection::vec(any::<bool>(), 2..16),
            flip in 0usize..16,
        ) {
            let n = col.len();
            let i = flip % n;
            prop_assume!(!col[i]);
            let mut upgraded = col.clone();
            upgraded[i] = true;
            for rule in [VotingRule::And, VotingRule::Or, VotingRule::Majority] {
                let before = vote(&rule, &col).unwrap();
                let after = vote(&rule, &upgraded).unwrap();
                prop_assert!(!before || after);
            }
        }
    }
}
