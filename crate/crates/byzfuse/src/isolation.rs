//! Reputation-based isolation: score each node over an observation window,
//! expel low-reputation nodes, and fuse only the survivors.
//!
//! Both schemes first form a per-epoch *intermediate* decision
//! `d_j = 1 iff at least l of the n reports at epoch j are 1`.
//!
//! **Hard reputation** counts agreement with the intermediate decisions:
//! `G_i = #{ j : r_ij == d_j }`.
//!
//! **Soft reputation** accumulates, per epoch, the absolute log-ratio
//! between the joint probabilities of the two possible local decisions of
//! node `i` given *all* reports of that epoch:
//!
//! ```text
//! R_ij = | ln P(u_ij = 0, r_j) - ln P(u_ij = 1, r_j) |,
//! P(u_i, r_j) = P(r_ij | u_i) * sum_H P(H) P(u_i | H) prod_{k != i} P(r_kj | H),
//! ```
//!
//! where `P(r | u) = 1 - q` if they agree and `q = alpha * p_mal` otherwise
//! (a report survives unflipped unless the node is Byzantine *and* chooses
//! to flip), and `P(r | H)` marginalizes the same flip channel over the
//! local decision. A large `R_ij` means the rest of the network pins down
//! node `i`'s local decision with confidence — evidence of honesty when
//! accumulated over the window; Byzantine flipping drags the sum down.
//!
//! **Signed agreement** keeps the same per-epoch joints but orients the
//! log-ratio by the node's own report instead of taking its magnitude:
//!
//! ```text
//! A_ij = ln P(u_ij = r_ij, r_j) - ln P(u_ij = 1 - r_ij, r_j).
//! ```
//!
//! Because the own-report channel factors are the constants `1 - q` and
//! `q`, `A_ij` equals `ln((1-q)/q)` plus the log-likelihood ratio of
//! "node i reports its decision" against "node i reports its complement"
//! — so the window sum is, up to a constant shift, the optimal
//! honest-versus-full-flip identity test given the other reports. The
//! magnitude form discards exactly this orientation: `R_ij = |A_ij|`.
//! The signed form is what the published soft-isolation payoffs track;
//! the magnitude form is the formula as printed. Both are provided.
//!
//! Nodes with window score strictly below the threshold `eta` are isolated;
//! the survivors' reports are fused per epoch (majority by default). If the
//! defence isolates everyone, the center has no signal left and falls back
//! to per-epoch fair-coin decisions, flagging the outcome as degenerate.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{vote, NodePerformance, VotingRule};
use crate::model::{Placement, ReportMatrix, StateSequence};

/// Probability clamp applied before every logarithm in soft scoring.
const PROB_CLAMP: f64 = 1e-12;

/// Which reputation statistic produced a score vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReputationScheme {
    /// Agreement counts against intermediate decisions.
    Hard,
    /// Accumulated absolute log-ratios of local-decision posteriors.
    Soft,
    /// Accumulated signed log-ratios oriented by the node's own report.
    SignedAgreement,
}

/// Per-node reputation scores over one observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationScores {
    scheme: ReputationScheme,
    scores: Vec<f64>,
}

impl ReputationScores {
    /// Wrap a score vector. Fails on an empty network.
    pub fn new(scheme: ReputationScheme, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::param("scores must cover at least one node"));
        }
        Ok(ReputationScores { scheme, scores })
    }

    /// The scheme that produced these scores.
    pub fn scheme(&self) -> ReputationScheme {
        self.scheme
    }

    /// Per-node scores, indexed like the report rows.
    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.scores.len()
    }
}

/// How the survivors' reports are fused per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinalRule {
    /// Strict majority of the surviving committee (the usual choice).
    #[default]
    MajorityOfSurvivors,
    /// Fixed count threshold, clamped to the survivor count: decide 1 iff at
    /// least `min(k, n')` survivors report 1.
    KOutOfSurvivors { k: usize },
}

/// Isolation policy: reputation threshold plus the two fusion thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationPolicy {
    /// Reputation threshold: isolate node `i` iff `score_i < eta` (strict).
    pub eta: f64,
    /// Count threshold `l` of the per-epoch intermediate decision.
    pub intermediate_l: usize,
    /// Fusion rule over the survivors.
    pub final_rule: FinalRule,
}

impl IsolationPolicy {
    /// Majority-of-survivors policy with intermediate threshold `l`.
    pub fn new(eta: f64, intermediate_l: usize) -> Self {
        IsolationPolicy {
            eta,
            intermediate_l,
            final_rule: FinalRule::default(),
        }
    }
}

/// Outcome of isolating and fusing one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionOutcome {
    /// Final per-epoch decisions.
    pub decision: StateSequence,
    /// Indices of the nodes that survived isolation (ascending).
    pub survivors: Vec<usize>,
    /// True iff everyone was isolated and the decisions are coin flips.
    pub degenerate: bool,
}

/// Per-epoch intermediate decisions `d_j = [at least l ones at epoch j]`.
pub fn intermediate_decisions(reports: &ReportMatrix, l: usize) -> Result<StateSequence> {
    let rule = VotingRule::KOutOfN { k: l };
    let bits = (0..reports.m())
        .map(|j| vote(&rule, &reports.column(j)))
        .collect::<Result<Vec<bool>>>()?;
    StateSequence::new(bits)
}

/// Hard reputation: per-node count of epochs agreeing with `d_int`.
pub fn hard_scores(reports: &ReportMatrix, d_int: &StateSequence) -> Result<ReputationScores> {
    if d_int.len() != reports.m() {
        return Err(Error::mismatch(format!(
            "intermediate decisions cover {} epochs but reports have {}",
            d_int.len(),
            reports.m()
        )));
    }
    let scores = (0..reports.n())
        .map(|i| crate::model::match_count(reports.row(i), d_int).map(|c| c as f64))
        .collect::<Result<Vec<f64>>>()?;
    ReputationScores::new(ReputationScheme::Hard, scores)
}

/// Soft reputation: per-node sum over epochs of the absolute log-ratio
/// between the two joint probabilities `P(u_ij = u, all reports of epoch j)`.
///
/// `alpha` and `p_mal_guess` are the *defender's* beliefs about the
/// contamination level and flip rate; `perf` is the common local sensor
/// performance (homogeneous sensors only — the statistic factors per epoch
/// only in that case); `prior0` is `P(H0)` per epoch.
pub fn soft_scores(
    reports: &ReportMatrix,
    alpha: f64,
    p_mal_guess: f64,
    perf: &NodePerformance,
    prior0: f64,
) -> Result<ReputationScores> {
    let per_epoch = soft_epoch_scores(reports, alpha, p_mal_guess, perf, prior0)?;
    let scores = per_epoch.rows().into_iter().map(|row| row.sum()).collect();
    ReputationScores::new(ReputationScheme::Soft, scores)
}

/// Signed-agreement reputation: window sums of the per-epoch log-ratios
/// oriented by each node's own report (see the module docs). Honest nodes
/// accumulate positive mass, full-flip Byzantines negative mass, which is
/// what makes this the variant behind the published soft-isolation
/// payoffs; [`soft_scores`] is its magnitude counterpart.
pub fn agreement_scores(
    reports: &ReportMatrix,
    alpha: f64,
    p_mal_guess: f64,
    perf: &NodePerformance,
    prior0: f64,
) -> Result<ReputationScores> {
    let per_epoch = agreement_epoch_scores(reports, alpha, p_mal_guess, perf, prior0)?;
    let scores = per_epoch.rows().into_iter().map(|row| row.sum()).collect();
    ReputationScores::new(ReputationScheme::SignedAgreement, scores)
}

/// The per-(node, epoch) reliability values `R_ij` behind [`soft_scores`]:
/// node `i`'s window score is the row sum over epochs. Exposed separately
/// because the soft defence's threshold grid quantizes the range of the
/// realized `R_ij` values themselves.
pub fn soft_epoch_scores(
    reports: &ReportMatrix,
    alpha: f64,
    p_mal_guess: f64,
    perf: &NodePerformance,
    prior0: f64,
) -> Result<Array2<f64>> {
    let mut values = agreement_epoch_scores(reports, alpha, p_mal_guess, perf, prior0)?;
    values.mapv_inplace(f64::abs);
    Ok(values)
}

/// The per-(node, epoch) signed values `A_ij` behind [`agreement_scores`]:
/// positive when the rest of the epoch supports the report, negative when
/// it contradicts it. `|A_ij|` recovers [`soft_epoch_scores`].
pub fn agreement_epoch_scores(
    reports: &ReportMatrix,
    alpha: f64,
    p_mal_guess: f64,
    perf: &NodePerformance,
    prior0: f64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&p_mal_guess) {
        return Err(Error::param(format!(
            "alpha and p_mal_guess must be probabilities, got {alpha} and {p_mal_guess}"
        )));
    }
    if !(0.0..=1.0).contains(&prior0) {
        return Err(Error::param(format!(
            "prior0 must be a probability, got {prior0}"
        )));
    }
    if perf.n() != reports.n() {
        return Err(Error::mismatch(format!(
            "performance covers {} nodes but reports have {}",
            perf.n(),
            reports.n()
        )));
    }
    if !perf.is_homogeneous() {
        return Err(Error::Unsupported(
            "soft reputation scoring requires homogeneous sensors".into(),
        ));
    }
    let p_d = clamp_prob(perf.p_d()[0]);
    let p_fa = clamp_prob(perf.p_fa()[0]);
    // Flip channel between a node's local decision and its report.
    let q = clamp_prob(alpha * p_mal_guess);
    let prior0 = clamp_prob(prior0);
    let prior1 = clamp_prob(1.0 - prior0);

    // Report marginals per hypothesis: P(r = 1 | H).
    let r1_h0 = clamp_prob((1.0 - q) * p_fa + q * (1.0 - p_fa));
    let r1_h1 = clamp_prob((1.0 - q) * p_d + q * (1.0 - p_d));

    let n = reports.n();
    let m = reports.m();
    let mut values = Array2::zeros((n, m));
    for j in 0..m {
        // Epoch-level log products over all nodes, one per hypothesis.
        let mut log_prod_h0 = 0.0;
        let mut log_prod_h1 = 0.0;
        for i in 0..n {
            let r = reports.get(i, j);
            log_prod_h0 += if r { r1_h0.ln() } else { (1.0 - r1_h0).ln() };
            log_prod_h1 += if r { r1_h1.ln() } else { (1.0 - r1_h1).ln() };
        }
        for i in 0..n {
            let r = reports.get(i, j);
            let (p_r_h0, p_r_h1) = if r { (r1_h0, r1_h1) } else { (1.0 - r1_h0, 1.0 - r1_h1) };
            // log of prior * prod_{k != i} P(r_k | H), by dividing node i out.
            let log_a = prior0.ln() + log_prod_h0 - p_r_h0.ln();
            let log_b = prior1.ln() + log_prod_h1 - p_r_h1.ln();
            // Common scale keeps the exponentials in range for any n.
            let scale = log_a.max(log_b);
            let a = (log_a - scale).exp();
            let b = (log_b - scale).exp();
            // P(u_i = 0, r_j) ~ P(r | u=0) [ (1-p_fa) a + (1-p_d) b ]
            // P(u_i = 1, r_j) ~ P(r | u=1) [ p_fa a + p_d b ]
            let (p_r_u0, p_r_u1) = if r { (q, 1.0 - q) } else { (1.0 - q, q) };
            let joint0 = (p_r_u0 * ((1.0 - p_fa) * a + (1.0 - p_d) * b)).max(PROB_CLAMP);
            let joint1 = (p_r_u1 * (p_fa * a + p_d * b)).max(PROB_CLAMP);
            // Oriented so that u = r_ij is the numerator.
            let ratio = joint0.ln() - joint1.ln();
            values[[i, j]] = if r { -ratio } else { ratio };
        }
    }
    Ok(values)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Isolate low-reputation nodes and fuse the survivors' reports.
///
/// Node `i` is isolated iff `scores[i] < policy.eta` (strict, so a node
/// sitting exactly on the threshold survives). The fallback RNG is consumed
/// only in the degenerate all-isolated case, where each epoch's decision is
/// a fair coin.
pub fn isolate_and_fuse<R: Rng + ?Sized>(
    reports: &ReportMatrix,
    scores: &ReputationScores,
    policy: &IsolationPolicy,
    fallback_rng: &mut R,
) -> Result<FusionOutcome> {
    if scores.n() != reports.n() {
        return Err(Error::mismatch(format!(
            "scores cover {} nodes but reports have {}",
            scores.n(),
            reports.n()
        )));
    }
    let survivors: Vec<usize> = (0..reports.n())
        .filter(|&i| scores.as_slice()[i] >= policy.eta)
        .collect();
    if survivors.is_empty() {
        let bits = (0..reports.m())
            .map(|_| fallback_rng.random::<f64>() < 0.5)
            .collect();
        return Ok(FusionOutcome {
            decision: StateSequence::new(bits)?,
            survivors,
            degenerate: true,
        });
    }
    let rule = match policy.final_rule {
        FinalRule::MajorityOfSurvivors => VotingRule::Majority,
        FinalRule::KOutOfSurvivors { k } => VotingRule::KOutOfN {
            k: k.min(survivors.len()).max(1),
        },
    };
    let bits = (0..reports.m())
        .map(|j| {
            let column: Vec<bool> = survivors.iter().map(|&i| reports.get(i, j)).collect();
            vote(&rule, &column)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(FusionOutcome {
        decision: StateSequence::new(bits)?,
        survivors,
        degenerate: false,
    })
}

/// Fraction of honest and of Byzantine nodes a threshold `eta` would
/// isolate. A class absent from the placement yields `None` rather than a
/// 0/0 rate.
pub fn isolation_rates(
    scores: &ReputationScores,
    placement: &Placement,
    eta: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    if scores.n() != placement.n() {
        return Err(Error::mismatch(format!(
            "scores cover {} nodes but placement has {}",
            scores.n(),
            placement.n()
        )));
    }
    let mut honest = (0usize, 0usize); // (isolated, total)
    let mut byz = (0usize, 0usize);
    for (i, &s) in scores.as_slice().iter().enumerate() {
        let bucket = if placement.is_byzantine(i) {
            &mut byz
        } else {
            &mut honest
        };
        bucket.1 += 1;
        if s < eta {
            bucket.0 += 1;
        }
    }
    let rate = |(iso, total): (usize, usize)| {
        (total > 0).then(|| iso as f64 / total as f64)
    };
    Ok((rate(honest), rate(byz)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        generate_reports, sample_placement, sample_states, ByzantinePrior, LocalChannel,
        Placement, StatePrior,
    };
    use crate::rng::{streams, trial_rng};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn matrix(rows: &[&[bool]], truth: Vec<bool>, byz: Vec<bool>) -> ReportMatrix {
        let n = rows.len();
        let m = rows[0].len();
        let bits: Vec<bool> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ReportMatrix::new(
            bits,
            n,
            m,
            StateSequence::new(truth).unwrap(),
            Placement::new(byz).unwrap(),
        )
        .unwrap()
    }

    /// Brute-force joints for node `i` at one epoch: P(u_i = v, r_j)
    /// computed by summing the full generative joint over both hypotheses
    /// and all 2^n local-decision vectors. Completely independent of the
    /// factored form used by the scoring functions.
    fn joint_oracle(
        column: &[bool],
        i: usize,
        alpha: f64,
        p_mal: f64,
        p_d: f64,
        p_fa: f64,
        prior0: f64,
    ) -> [f64; 2] {
        let n = column.len();
        let q = alpha * p_mal;
        let mut joint = [0.0f64; 2]; // indexed by u_i
        for (prior, p_u1) in [(prior0, p_fa), (1.0 - prior0, p_d)] {
            for u_vec in 0u32..(1 << n) {
                let mut p = prior;
                for (k, &r_k) in column.iter().enumerate() {
                    let u_k = u_vec >> k & 1 == 1;
                    p *= if u_k { p_u1 } else { 1.0 - p_u1 };
                    p *= if r_k == u_k { 1.0 - q } else { q };
                }
                let u_i = u_vec >> i & 1 == 1;
                joint[usize::from(u_i)] += p;
            }
        }
        joint
    }

    fn soft_oracle(
        column: &[bool],
        i: usize,
        alpha: f64,
        p_mal: f64,
        p_d: f64,
        p_fa: f64,
        prior0: f64,
    ) -> f64 {
        let joint = joint_oracle(column, i, alpha, p_mal, p_d, p_fa, prior0);
        (joint[0].ln() - joint[1].ln()).abs()
    }

    fn agreement_oracle(
        column: &[bool],
        i: usize,
        alpha: f64,
        p_mal: f64,
        p_d: f64,
        p_fa: f64,
        prior0: f64,
    ) -> f64 {
        let joint = joint_oracle(column, i, alpha, p_mal, p_d, p_fa, prior0);
        let (num, den) = if column[i] {
            (joint[1], joint[0])
        } else {
            (joint[0], joint[1])
        };
        num.ln() - den.ln()
    }

    #[test]
    fn intermediate_decisions_apply_count_threshold() {
        let r = matrix(
            &[
                &[true, false, true],
                &[true, false, false],
                &[false, true, true],
                &[true, false, false],
            ],
            vec![true, false, false],
            vec![false; 4],
        );
        // Columns have 3, 1, 2 ones; l = 2 keeps epochs with >= 2 ones.
        let d = intermediate_decisions(&r, 2).unwrap();
        assert_eq!(d.as_slice(), &[true, false, true]);
    }

    #[test]
    fn hard_scores_count_agreements() {
        let r = matrix(
            &[
                &[true, false, true], // agrees with d on all 3
                &[false, true, false], // agrees on none
                &[true, true, true],  // agrees on epochs 0 and 2
            ],
            vec![true, false, true],
            vec![false; 3],
        );
        let d = StateSequence::new(vec![true, false, true]).unwrap();
        let s = hard_scores(&r, &d).unwrap();
        assert_eq!(s.as_slice(), &[3.0, 0.0, 2.0]);
    }

    #[test]
    fn soft_scores_match_brute_force_oracle() {
        let (alpha, p_mal, p_d, p_fa, prior0) = (0.4, 0.9, 0.8, 0.2, 0.5);
        let mut rng = trial_rng(11, streams::SCRATCH, 0);
        for trial in 0..20 {
            let states = sample_states(&StatePrior::equiprobable(), 3, &mut rng).unwrap();
            let placement = sample_placement(
                &ByzantinePrior::IndependentAlpha { alpha },
                5,
                &mut rng,
            )
            .unwrap();
            let ch = LocalChannel::new(p_fa, p_mal).unwrap();
            let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            let perf = NodePerformance::homogeneous(5, p_d, p_fa).unwrap();
            let got = soft_scores(&reports, alpha, p_mal, &perf, prior0).unwrap();
            for i in 0..5 {
                let want: f64 = (0..reports.m())
                    .map(|j| {
                        soft_oracle(&reports.column(j), i, alpha, p_mal, p_d, p_fa, prior0)
                    })
                    .sum();
                assert_abs_diff_eq!(got.as_slice()[i], want, epsilon = 1e-8);
                let _ = trial;
            }
        }
    }

    #[test]
    fn agreement_scores_match_brute_force_oracle() {
        let (alpha, p_mal, p_d, p_fa, prior0) = (0.4, 0.9, 0.8, 0.2, 0.5);
        let mut rng = trial_rng(13, streams::SCRATCH, 0);
        for _ in 0..20 {
            let states = sample_states(&StatePrior::equiprobable(), 3, &mut rng).unwrap();
            let placement = sample_placement(
                &ByzantinePrior::IndependentAlpha { alpha },
                5,
                &mut rng,
            )
            .unwrap();
            let ch = LocalChannel::new(p_fa, p_mal).unwrap();
            let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            let perf = NodePerformance::homogeneous(5, p_d, p_fa).unwrap();
            let got = agreement_scores(&reports, alpha, p_mal, &perf, prior0).unwrap();
            assert_eq!(got.scheme(), ReputationScheme::SignedAgreement);
            for i in 0..5 {
                let want: f64 = (0..reports.m())
                    .map(|j| {
                        agreement_oracle(&reports.column(j), i, alpha, p_mal, p_d, p_fa, prior0)
                    })
                    .sum();
                assert_abs_diff_eq!(got.as_slice()[i], want, epsilon = 1e-8);
            }
        }
    }

    /// The magnitude statistic is exactly the absolute value of the signed
    /// one, epoch by epoch.
    #[test]
    fn soft_epoch_scores_are_agreement_magnitudes() {
        let (alpha, guess, prior0) = (0.35, 0.8, 0.5);
        let mut rng = trial_rng(17, streams::SCRATCH, 1);
        let states = sample_states(&StatePrior::equiprobable(), 6, &mut rng).unwrap();
        let placement = sample_placement(
            &ByzantinePrior::IndependentAlpha { alpha },
            9,
            &mut rng,
        )
        .unwrap();
        let ch = LocalChannel::new(0.15, 1.0).unwrap();
        let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
        let perf = NodePerformance::symmetric(9, 0.15).unwrap();
        let signed = agreement_epoch_scores(&reports, alpha, guess, &perf, prior0).unwrap();
        let magnitude = soft_epoch_scores(&reports, alpha, guess, &perf, prior0).unwrap();
        for (a, r) in signed.iter().zip(magnitude.iter()) {
            assert_eq!(a.abs(), *r);
        }
    }

    /// Flipping one report reflects that node's signed epoch value about
    /// the channel constant: A + A' = 2 ln((1-q)/q). The consensus factors
    /// divide the node's own report out, so the identity is exact.
    #[test]
    fn flipping_a_report_reflects_its_signed_score() {
        let (alpha, guess, prior0) = (0.3, 0.9, 0.5);
        let q: f64 = alpha * guess;
        let mut rng = trial_rng(19, streams::SCRATCH, 2);
        let states = sample_states(&StatePrior::equiprobable(), 1, &mut rng).unwrap();
        let placement = sample_placement(
            &ByzantinePrior::IndependentAlpha { alpha },
            7,
            &mut rng,
        )
        .unwrap();
        let ch = LocalChannel::new(0.2, 1.0).unwrap();
        let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
        let perf = NodePerformance::symmetric(7, 0.2).unwrap();
        let before = agreement_epoch_scores(&reports, alpha, guess, &perf, prior0).unwrap();
        for i in 0..7 {
            let mut bits: Vec<bool> = (0..7).map(|k| reports.get(k, 0)).collect();
            bits[i] = !bits[i];
            let flipped = ReportMatrix::new(
                bits,
                7,
                1,
                reports.truth().clone(),
                reports.placement().clone(),
            )
            .unwrap();
            let after = agreement_epoch_scores(&flipped, alpha, guess, &perf, prior0).unwrap();
            assert_abs_diff_eq!(
                before[[i, 0]] + after[[i, 0]],
                2.0 * ((1.0 - q) / q).ln(),
                epsilon = 1e-9
            );
        }
    }

    /// With a reliable channel and full flipping, the signed window sums
    /// split into two disjoint clusters: every honest node outranks every
    /// Byzantine one, trial after trial.
    #[test]
    fn signed_agreement_separates_full_flip_clusters() {
        let (n, m, eps) = (20, 8, 0.1);
        let perf = NodePerformance::symmetric(n, eps).unwrap();
        let ch = LocalChannel::new(eps, 1.0).unwrap();
        for trial in 0..10 {
            let mut rng = trial_rng(23, streams::SCRATCH, trial);
            let states = sample_states(&StatePrior::equiprobable(), m, &mut rng).unwrap();
            let placement =
                sample_placement(&ByzantinePrior::FixedCount { n_b: 6 }, n, &mut rng).unwrap();
            let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            let scores = agreement_scores(&reports, 0.3, 1.0, &perf, 0.5).unwrap();
            let mut worst_honest = f64::INFINITY;
            let mut best_byz = f64::NEG_INFINITY;
            for (i, &s) in scores.as_slice().iter().enumerate() {
                if placement.is_byzantine(i) {
                    best_byz = best_byz.max(s);
                } else {
                    worst_honest = worst_honest.min(s);
                }
            }
            assert!(
                best_byz < worst_honest,
                "trial {trial}: best Byzantine {best_byz} vs worst honest {worst_honest}"
            );
        }
    }

    /// Statistical sanity: honest nodes out-score Byzantine ones on average
    /// under full flipping, for both schemes.
    #[test]
    fn honest_nodes_score_higher_on_average() {
        let (n, m, eps, alpha) = (20, 10, 0.1, 0.3);
        let perf = NodePerformance::symmetric(n, eps).unwrap();
        let ch = LocalChannel::new(eps, 1.0).unwrap();
        let mut hard_h = 0.0;
        let mut hard_b = 0.0;
        let mut soft_h = 0.0;
        let mut soft_b = 0.0;
        let mut count_h = 0.0;
        let mut count_b = 0.0;
        for t in 0..200 {
            let mut rng = trial_rng(12, streams::SCRATCH, t);
            let states = sample_states(&StatePrior::equiprobable(), m, &mut rng).unwrap();
            let placement =
                sample_placement(&ByzantinePrior::FixedCount { n_b: 6 }, n, &mut rng).unwrap();
            let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            let d = intermediate_decisions(&reports, n / 2).unwrap();
            let hs = hard_scores(&reports, &d).unwrap();
            let ss = soft_scores(&reports, alpha, 1.0, &perf, 0.5).unwrap();
            for i in 0..n {
                if placement.is_byzantine(i) {
                    hard_b += hs.as_slice()[i];
                    soft_b += ss.as_slice()[i];
                    count_b += 1.0;
                } else {
                    hard_h += hs.as_slice()[i];
                    soft_h += ss.as_slice()[i];
                    count_h += 1.0;
                }
            }
        }
        assert!(hard_h / count_h > hard_b / count_b + 1.0);
        assert!(soft_h / count_h > soft_b / count_b);
    }

    #[test]
    fn isolation_threshold_is_strict() {
        let r = matrix(
            &[&[true], &[true], &[false]],
            vec![true],
            vec![false; 3],
        );
        let scores =
            ReputationScores::new(ReputationScheme::Hard, vec![2.0, 3.0, 1.0]).unwrap();
        let policy = IsolationPolicy::new(2.0, 2);
        let mut rng = trial_rng(13, streams::FALLBACK, 0);
        let out = isolate_and_fuse(&r, &scores, &policy, &mut rng).unwrap();
        // Score exactly 2.0 survives; only the 1.0 node is isolated.
        assert_eq!(out.survivors, vec![0, 1]);
        assert!(!out.degenerate);
        assert_eq!(out.decision.as_slice(), &[true]);
    }

    #[test]
    fn all_isolated_falls_back_to_coin_flips() {
        let r = matrix(&[&[true, false]], vec![true, false], vec![true]);
        let scores = ReputationScores::new(ReputationScheme::Hard, vec![0.0]).unwrap();
        let policy = IsolationPolicy::new(5.0, 1);
        let mut rng_a = trial_rng(14, streams::FALLBACK, 7);
        let out_a = isolate_and_fuse(&r, &scores, &policy, &mut rng_a).unwrap();
        assert!(out_a.degenerate);
        assert!(out_a.survivors.is_empty());
        // Same fallback seed => same coin flips.
        let mut rng_b = trial_rng(14, streams::FALLBACK, 7);
        let out_b = isolate_and_fuse(&r, &scores, &policy, &mut rng_b).unwrap();
        assert_eq!(out_a.decision, out_b.decision);
    }

    #[test]
    fn survivors_fused_by_majority() {
        // Node 2 is isolated; among survivors {0, 1, 3} the majority at
        // epoch 0 is 1 (2 of 3) and at epoch 1 is 0 (1 of 3).
        let r = matrix(
            &[
                &[true, false],
                &[true, true],
                &[true, true],
                &[false, false],
            ],
            vec![true, false],
            vec![false, false, true, false],
        );
        let scores =
            ReputationScores::new(ReputationScheme::Hard, vec![2.0, 2.0, 0.0, 2.0]).unwrap();
        let policy = IsolationPolicy::new(1.0, 2);
        let mut rng = trial_rng(15, streams::FALLBACK, 0);
        let out = isolate_and_fuse(&r, &scores, &policy, &mut rng).unwrap();
        assert_eq!(out.survivors, vec![0, 1, 3]);
        assert_eq!(out.decision.as_slice(), &[true, false]);
    }

    #[test]
    fn isolation_rates_handle_empty_classes() {
        let scores =
            ReputationScores::new(ReputationScheme::Hard, vec![1.0, 3.0, 0.0]).unwrap();
        let all_honest = Placement::all_honest(3).unwrap();
        let (h, b) = isolation_rates(&scores, &all_honest, 2.0).unwrap();
        assert_abs_diff_eq!(h.unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert!(b.is_none());

        let mixed = Placement::new(vec![true, false, false]).unwrap();
        let (h, b) = isolation_rates(&scores, &mixed, 2.0).unwrap();
        assert_abs_diff_eq!(h.unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.unwrap(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        /// Within an epoch the soft statistic depends on a node only through
        /// its report value: all nodes reporting alike score alike.
        #[test]
        fn prop_soft_scores_depend_only_on_report_value(
            seed in 0u64..300, n in 2usize..8
        ) {
            let mut rng = trial_rng(seed, streams::SCRATCH, 1);
            let states = sample_states(&StatePrior::equiprobable(), 1, &mut rng).unwrap();
            let placement = sample_placement(
                &ByzantinePrior::IndependentAlpha { alpha: 0.4 }, n, &mut rng).unwrap();
            let ch = LocalChannel::new(0.2, 0.8).unwrap();
            let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            let perf = NodePerformance::symmetric(n, 0.2).unwrap();
            let s = soft_scores(&reports, 0.4, 0.8, &perf, 0.5).unwrap();
            for i in 0..n {
                for k in 0..n {
                    if reports.get(i, 0) == reports.get(k, 0) {
                        prop_assert!((s.as_slice()[i] - s.as_slice()[k]).abs() < 1e-10);
                    }
                }
            }
        }

        /// Hard scores are bounded by the window length and survivors are
        /// exactly the nodes at or above the threshold.
        #[test]
        fn prop_hard_scores_and_survivors(
            seed in 0u64..300, n in 1usize..10, m in 1usize..8, eta in 0.0f64..9.0
        ) {
            let mut rng = trial_rng(seed, streams::SCRATCH, 2);
            let states = sample_states(&StatePrior::equiprobable(), m, &mut rng).unwrap();
            let placement = sample_placement(
                &ByzantinePrior::IndependentAlpha { alpha: 0.3 }, n, &mut rng).unwrap();
            let ch = LocalChannel::new(0.1, 1.0).unwrap();
            let reports = generate_reports(&states, &placement, &ch, &mut rng).unwrap();
            let l = n / 2 + 1;
            let d = intermediate_decisions(&reports, l).unwrap();
            let s = hard_scores(&reports, &d).unwrap();
            for &x in s.as_slice() {
                prop_assert!((0.0..=m as f64).contains(&x));
            }
            let policy = IsolationPolicy::new(eta, l);
            let mut frng = trial_rng(seed, streams::FALLBACK, 2);
            let out = isolate_and_fuse(&reports, &s, &policy, &mut frng).unwrap();
            for i in 0..n {
                let survived = out.survivors.contains(&i);
                prop_assert_eq!(survived, s.as_slice()[i] >= eta);
            }
        }
    }
}
