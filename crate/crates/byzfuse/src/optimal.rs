//! Jointly optimal (MAP) fusion over a whole observation window.
//!
//! With equiprobable i.i.d. states, the MAP estimate of the state sequence
//! maximizes, over all `2^m` candidates `s`, the likelihood of the observed
//! reports with the Byzantine placement marginalized out. Writing
//! `c_i = m_eq(i)` for the number of epochs on which node `i`'s row matches
//! the candidate,
//!
//! ```text
//! h(i) = (1-eps)^(c_i) * eps^(m-c_i)        honest row likelihood
//! b(i) = (1-delta)^(c_i) * delta^(m-c_i)    Byzantine row likelihood
//! ```
//!
//! the per-prior objectives are
//!
//! - independent placement: `prod_i [(1-alpha) h(i) + alpha b(i)]`,
//! - exactly `k` Byzantines: `f_{n,k}` — the sum over all `C(n,k)`
//!   placements of the product of row likelihoods,
//! - fewer than `h` Byzantines (max-entropy): `sum_{k<h} f_{n,k}`,
//! - no knowledge: the independent objective at `alpha = 1/2`.
//!
//! The placement sum is never enumerated: `f_{n,k}` satisfies
//!
//! ```text
//! f_{r,k} = b(first) f_{r-1,k-1} + h(first) f_{r-1,k}
//! ```
//!
//! over suffixes of the node list, with all-Byzantine / all-honest products
//! as boundary rows ([`dp_sum`]). Only the cells with
//! `max(0, k-(n-r)) <= kappa <= min(r, k)` can reach `f_{n,k}`, so one
//! evaluation costs `O(k (n-k+1))` cells.
//!
//! The candidate enumeration is exponential in `m` by design — this is the
//! benchmark rule, not the scalable one. Windows beyond
//! [`MapConfig::DEFAULT_MAX_WINDOW`] epochs are refused; use the [`crate::mp`]
//! message-passing approximation there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    generate_reports, sample_placement, sample_states, match_count, ByzantinePrior,
    DetectionSetup, ErrorMetric, LocalChannel, ReportMatrix, StateSequence,
};
use crate::rng::{streams, trial_rng};

/// How equal-scoring candidates are resolved. Only one rule is offered —
/// keeping it a type (rather than a comment) makes the convention part of
/// the API and leaves room for alternatives without breaking callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Among maximizers, return the lexicographically smallest sequence
    /// (epoch 0 most significant, 0 < 1).
    #[default]
    LexicographicSmallest,
}

/// Configuration of the MAP rule: what the fusion center believes.
///
/// `channel.p_mal()` is the center's *guess* of the flip probability; the
/// generator's true value may differ (that mismatch is exactly what the
/// game analyses sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub byz_prior: ByzantinePrior,
    pub channel: LocalChannel,
    pub tie_rule: TieRule,
    /// Hard cap on the window length for exhaustive enumeration.
    pub max_window: usize,
}

impl MapConfig {
    /// Default enumeration cap: `2^22` candidates is the point where a
    /// single decision stops being interactive.
    pub const DEFAULT_MAX_WINDOW: usize = 22;

    /// MAP rule under `byz_prior` with the given channel belief.
    pub fn new(byz_prior: ByzantinePrior, channel: LocalChannel) -> Self {
        MapConfig {
            byz_prior,
            channel,
            tie_rule: TieRule::default(),
            max_window: Self::DEFAULT_MAX_WINDOW,
        }
    }
}

/// The reachable-window dynamic-programming table for one `f_{n,k}`.
///
/// Row `r` (suffix of the last `r` nodes) stores `f_{r,kappa}` for the
/// `kappa` that can still reach `f_{n,k}`; everything else is provably
/// irrelevant and never touched.
#[derive(Debug, Clone)]
pub struct DpTable {
    n: usize,
    k: usize,
    value: f64,
    cells: usize,
}

impl DpTable {
    /// Evaluate `f_{n,k}` for per-node weights `b` (Byzantine) and `h`
    /// (honest). Weights must be finite and non-negative.
    pub fn build(b: &[f64], h: &[f64], k: usize) -> Result<Self> {
        let n = b.len();
        if n == 0 || h.len() != n {
            return Err(Error::mismatch(format!(
                "need matching non-empty weight vectors, got lengths {} and {}",
                b.len(),
                h.len()
            )));
        }
        if k > n {
            return Err(Error::param(format!(
                "Byzantine count k = {k} exceeds n = {n}"
            )));
        }
        for v in b.iter().chain(h) {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::param(format!(
                    "DP weights must be finite and non-negative, got {v}"
                )));
            }
        }
        let mut cells = 0usize;
        // prev[kappa - lo(r-1)] = f_{r-1, kappa}; suffix of length r uses
        // nodes b[n-r..], so "first node of the suffix" is index n - r.
        let lo = |r: usize| k.saturating_sub(n - r);
        let hi = |r: usize| r.min(k);
        let mut prev: Vec<f64> = vec![1.0]; // f_{0,0} = 1 (empty product)
        for r in 1..=n {
            let i = n - r;
            let (lo_r, hi_r) = (lo(r), hi(r));
            let (lo_p, hi_p) = (lo(r - 1), hi(r - 1));
            let mut cur = vec![0.0; hi_r - lo_r + 1];
            for (slot, kappa) in (lo_r..=hi_r).enumerate() {
                let take = |kk: usize| -> f64 {
                    if (lo_p..=hi_p).contains(&kk) {
                        prev[kk - lo_p]
                    } else {
                        0.0
                    }
                };
                let byz_part = if kappa == 0 { 0.0 } else { b[i] * take(kappa - 1) };
                cur[slot] = byz_part + h[i] * take(kappa);
                cells += 1;
            }
            prev = cur;
        }
        Ok(DpTable {
            n,
            k,
            value: prev[k - lo(n)],
            cells,
        })
    }

    /// The placement sum `f_{n,k}`.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Number of DP cells evaluated; bounded by `(k+1)(n-k+1)`.
    pub fn cells_evaluated(&self) -> usize {
        self.cells
    }

    /// Dimensions `(n, k)` this table was built for.
    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.k)
    }
}

/// Sum over all placements of exactly `k` Byzantines among `n` nodes of the
/// product of per-node weights: `f_{n,k} = sum_{|S|=k} prod_{i in S} b_i
/// prod_{i not in S} h_i`.
pub fn dp_sum(b: &[f64], h: &[f64], k: usize) -> Result<f64> {
    DpTable::build(b, h, k).map(|t| t.value())
}

/// `ln f_{n,k}` with per-node scaling, safe for windows where the raw
/// likelihoods would underflow. `b_ln`/`h_ln` are log-weights (may be
/// `-inf`). Also returns all `ln f_{n,kappa}` for `kappa <= k` when
/// `all_k` is set (used by the bounded prior).
fn dp_log(b_ln: &[f64], h_ln: &[f64], k: usize, all_k: bool) -> Vec<f64> {
    let n = b_ln.len();
    debug_assert_eq!(h_ln.len(), n);
    debug_assert!(k <= n);
    // Per-node scale: divide both weights by max(b, h) in the log domain.
    let mut log_scale = 0.0;
    let mut b_s = vec![0.0; n];
    let mut h_s = vec![0.0; n];
    for i in 0..n {
        let s = b_ln[i].max(h_ln[i]);
        if s == f64::NEG_INFINITY {
            // Both weights zero: every placement sum through this node is 0.
            return vec![f64::NEG_INFINITY; if all_k { k + 1 } else { 1 }];
        }
        log_scale += s;
        b_s[i] = (b_ln[i] - s).exp();
        h_s[i] = (h_ln[i] - s).exp();
    }
    let lo = |r: usize| if all_k { 0 } else { k.saturating_sub(n - r) };
    let hi = |r: usize| r.min(k);
    let mut prev: Vec<f64> = vec![1.0];
    for r in 1..=n {
        let i = n - r;
        let (lo_r, hi_r) = (lo(r), hi(r));
        let (lo_p, hi_p) = (lo(r - 1), hi(r - 1));
        let mut cur = vec![0.0; hi_r - lo_r + 1];
        for (slot, kappa) in (lo_r..=hi_r).enumerate() {
            let take = |kk: usize| -> f64 {
                if kk >= lo_p && kk <= hi_p {
                    prev[kk - lo_p]
                } else {
                    0.0
                }
            };
            let byz_part = if kappa == 0 { 0.0 } else { b_s[i] * take(kappa - 1) };
            cur[slot] = byz_part + h_s[i] * take(kappa);
        }
        prev = cur;
    }
    let to_log = |v: f64| {
        if v > 0.0 {
            v.ln() + log_scale
        } else {
            f64::NEG_INFINITY
        }
    };
    if all_k {
        prev.into_iter().map(to_log).collect()
    } else {
        vec![to_log(prev[k - lo(n)])]
    }
}

/// Numerically careful `count * ln(p)` that treats `0 * ln(0)` as 0.
#[inline]
fn pow_log(count: usize, p: f64) -> f64 {
    if count == 0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        count as f64 * p.ln()
    }
}

/// `ln(exp(x) + exp(y))` robust to `-inf` inputs.
#[inline]
fn log_sum_exp2(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    if m == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        m + ((x - m).exp() + (y - m).exp()).ln()
    }
}

/// Per-window tables of `ln h` and `ln b` indexed by match count.
struct LikelihoodTables {
    h_ln: Vec<f64>,
    b_ln: Vec<f64>,
}

impl LikelihoodTables {
    fn new(m: usize, channel: &LocalChannel) -> Self {
        let eps = channel.epsilon();
        let delta = channel.delta();
        let h_ln = (0..=m)
            .map(|c| pow_log(c, 1.0 - eps) + pow_log(m - c, eps))
            .collect();
        let b_ln = (0..=m)
            .map(|c| pow_log(c, 1.0 - delta) + pow_log(m - c, delta))
            .collect();
        LikelihoodTables { h_ln, b_ln }
    }
}

/// Log-objective of one candidate sequence under the configured prior.
///
/// Monotone in the posterior `P(candidate | reports)`; differences of two
/// scores are log posterior-odds. `-inf` is a legitimate value (a candidate
/// the prior or a degenerate channel rules out entirely).
pub fn score_sequence(
    reports: &ReportMatrix,
    candidate: &StateSequence,
    cfg: &MapConfig,
) -> Result<f64> {
    if candidate.len() != reports.m() {
        return Err(Error::mismatch(format!(
            "candidate has {} epochs but reports have {}",
            candidate.len(),
            reports.m()
        )));
    }
    cfg.byz_prior.validate_for(reports.n())?;
    let tables = LikelihoodTables::new(reports.m(), &cfg.channel);
    let counts = (0..reports.n())
        .map(|i| match_count(reports.row(i), candidate))
        .collect::<Result<Vec<usize>>>()?;
    Ok(score_from_counts(&counts, &tables, &cfg.byz_prior))
}

/// Shared scoring core: all objectives depend on the reports only through
/// the per-node match counts.
fn score_from_counts(counts: &[usize], tables: &LikelihoodTables, prior: &ByzantinePrior) -> f64 {
    match *prior {
        ByzantinePrior::IndependentAlpha { alpha } => {
            mix_score(counts, tables, alpha)
        }
        ByzantinePrior::Unconstrained => mix_score(counts, tables, 0.5),
        ByzantinePrior::FixedCount { n_b } => {
            let (b_ln, h_ln) = per_node_logs(counts, tables);
            dp_log(&b_ln, &h_ln, n_b, false)[0]
        }
        ByzantinePrior::BoundedMaxEnt { h } => {
            let (b_ln, h_ln) = per_node_logs(counts, tables);
            let logs = dp_log(&b_ln, &h_ln, h - 1, true);
            logs.into_iter().fold(f64::NEG_INFINITY, log_sum_exp2)
        }
    }
}

fn mix_score(counts: &[usize], tables: &LikelihoodTables, alpha: f64) -> f64 {
    let ln_a = if alpha > 0.0 { alpha.ln() } else { f64::NEG_INFINITY };
    let ln_na = if alpha < 1.0 { (1.0 - alpha).ln() } else { f64::NEG_INFINITY };
    counts
        .iter()
        .map(|&c| log_sum_exp2(ln_na + tables.h_ln[c], ln_a + tables.b_ln[c]))
        .sum()
}

fn per_node_logs(counts: &[usize], tables: &LikelihoodTables) -> (Vec<f64>, Vec<f64>) {
    let b_ln = counts.iter().map(|&c| tables.b_ln[c]).collect();
    let h_ln = counts.iter().map(|&c| tables.h_ln[c]).collect();
    (b_ln, h_ln)
}

/// Exhaustive MAP decision over all `2^m` candidate sequences.
///
/// Ties go to the lexicographically smallest maximizer. Returns
/// [`Error::Capacity`] when `m` exceeds `cfg.max_window`; the message points
/// at the linear-cost alternative in [`crate::mp`].
pub fn map_decide(reports: &ReportMatrix, cfg: &MapConfig) -> Result<StateSequence> {
    let m = reports.m();
    if m > cfg.max_window {
        return Err(Error::Capacity(format!(
            "exhaustive MAP enumerates 2^m sequences and m = {m} exceeds the cap of {}; \
             use the message-passing rule (crate::mp) for long windows",
            cfg.max_window
        )));
    }
    cfg.byz_prior.validate_for(reports.n())?;
    let tables = LikelihoodTables::new(m, &cfg.channel);
    let masks: Vec<u64> = (0..reports.n())
        .map(|i| reports.row_mask(i))
        .collect::<Result<_>>()?;

    let mut best_idx = 0u64;
    let mut best_score = f64::NEG_INFINITY;
    let mut counts = vec![0usize; reports.n()];
    for idx in 0..(1u64 << m) {
        for (c, &mask) in counts.iter_mut().zip(&masks) {
            *c = m - (mask ^ idx).count_ones() as usize;
        }
        let score = score_from_counts(&counts, &tables, &cfg.byz_prior);
        // Strict inequality keeps the first (smallest) maximizer:
        // TieRule::LexicographicSmallest.
        if score > best_score {
            best_score = score;
            best_idx = idx;
        }
    }
    let TieRule::LexicographicSmallest = cfg.tie_rule;
    StateSequence::from_index(best_idx, m)
}

/// Monte-Carlo error estimate with exact integer bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    /// Wrong decisions counted under the chosen metric.
    pub errors: u64,
    /// Denominator: `trials * m` (per-bit) or `trials` (per-sequence).
    pub samples: u64,
}

impl ErrorEstimate {
    /// Point estimate of the error probability.
    pub fn p_e(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.errors as f64 / self.samples as f64
        }
    }

    /// Binomial standard error of the point estimate.
    pub fn std_err(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            let p = self.p_e();
            (p * (1.0 - p) / self.samples as f64).sqrt()
        }
    }
}

/// Estimate the error probability of the MAP rule by Monte Carlo.
///
/// The generator flips with `p_mal_true`; the rule believes `p_mal_fc`.
/// Trials are independent and sub-seeded from `(seed, stream, trial)`, so
/// the estimate is identical for any thread count and any partition of the
/// trial range (the trial loop runs on the ambient rayon pool).
pub fn estimate_error_probability(
    setup: &DetectionSetup,
    metric: ErrorMetric,
    p_mal_true: f64,
    p_mal_fc: f64,
    trials: u64,
    seed: u64,
) -> Result<ErrorEstimate> {
    setup.validate()?;
    let gen_channel = LocalChannel::new(setup.epsilon, p_mal_true)?;
    let fc_channel = LocalChannel::new(setup.epsilon, p_mal_fc)?;
    let cfg = MapConfig::new(setup.byz_prior, fc_channel);
    // Fail fast (capacity, parameter errors) before spawning the loop.
    {
        let mut rng = trial_rng(seed, streams::STATES, 0);
        let states = sample_states(&setup.state_prior, setup.m, &mut rng)?;
        let mut rng = trial_rng(seed, streams::PLACEMENT, 0);
        let placement = sample_placement(&setup.byz_prior, setup.n, &mut rng)?;
        let mut rng = trial_rng(seed, streams::REPORTS, 0);
        let reports = generate_reports(&states, &placement, &gen_channel, &mut rng)?;
        map_decide(&reports, &cfg)?;
    }
    let errors: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, streams::STATES, t);
            let states = sample_states(&setup.state_prior, setup.m, &mut rng)
                .expect("validated above");
            let mut rng = trial_rng(seed, streams::PLACEMENT, t);
            let placement = sample_placement(&setup.byz_prior, setup.n, &mut rng)
                .expect("validated above");
            let mut rng = trial_rng(seed, streams::REPORTS, t);
            let reports = generate_reports(&states, &placement, &gen_channel, &mut rng)
                .expect("validated above");
            let decided = map_decide(&reports, &cfg).expect("validated above");
            let wrong = decided.hamming_distance(&states).expect("same length");
            match metric {
                ErrorMetric::PerBit => wrong as u64,
                ErrorMetric::PerSequence => u64::from(wrong > 0),
            }
        })
        .sum();
    let samples = match metric {
        ErrorMetric::PerBit => trials * setup.m as u64,
        ErrorMetric::PerSequence => trials,
    };
    Ok(ErrorEstimate { errors, samples })
}
