//! Concrete payoff scenarios: the fusion problems whose error probability
//! the game layer estimates.
//!
//! Both bundled scenarios give the attacker the report-flipping probability
//! `P_mal` as strategy value. They differ in what the defender controls:
//!
//! - [`OptimalFusionGame`] — the fusion center runs the jointly optimal
//!   MAP rule but must commit to an *assumed* flip probability; the
//!   defender's strategy is that assumption.
//! - [`IsolationGame`] — the fusion center runs an isolation defence
//!   (hard agreement counting or soft log-likelihood reputations) and the
//!   defender's strategy is the isolation threshold.

use crate::consensus::{MeasurementModel, NodeSelection};
use crate::error::{Error, Result};
use crate::fusion::NodePerformance;
use crate::isolation::{
    agreement_scores, hard_scores, intermediate_decisions, isolate_and_fuse, soft_scores,
    IsolationPolicy, ReputationScores,
};
use crate::model::{
    generate_reports, sample_placement, sample_states, ByzantinePrior, DetectionSetup,
    ErrorMetric, LocalChannel, ReportMatrix, StatePrior, StateSequence,
};
use crate::rng::{streams, trial_rng};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PayoffScenario, StrategyGrid};

fn check_unit_interval(side: &str, what: &str, values: &[f64]) -> Result<()> {
    if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param(format!(
            "{side} strategies are {what} and must lie in [0, 1], got {bad}"
        )));
    }
    Ok(())
}

/// Draw one trial's window: states, Byzantine placement, and the report
/// matrix under the attacker's true flip probability. The three stream
/// sub-seeds depend only on `(seed, trial)`, so every attacker row and
/// every defender column of the payoff matrix sees the same draws.
fn draw_window(
    seed: u64,
    trial: u64,
    m: usize,
    n: usize,
    state_prior: &StatePrior,
    byz_prior: &ByzantinePrior,
    gen_channel: &LocalChannel,
) -> Result<(StateSequence, ReportMatrix)> {
    let mut rng = trial_rng(seed, streams::STATES, trial);
    let states = sample_states(state_prior, m, &mut rng)?;
    let mut rng = trial_rng(seed, streams::PLACEMENT, trial);
    let placement = sample_placement(byz_prior, n, &mut rng)?;
    let mut rng = trial_rng(seed, streams::REPORTS, trial);
    let reports = generate_reports(&states, &placement, gen_channel, &mut rng)?;
    Ok((states, reports))
}

/// Attacker flips reports; defender picks the flip probability the MAP
/// fusion rule assumes.
///
/// The diagonal of this game's payoff matrix is the matched-assumption
/// error probability; off-diagonal cells measure how much a wrong
/// assumption costs. Payoffs reproduce
/// [`crate::optimal::estimate_error_probability`] bit for bit when the
/// grids collapse to a single profile, because the per-trial sub-seeding
/// is identical.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalFusionGame {
    /// Number of nodes.
    pub n: usize,
    /// Observation window length (epochs).
    pub m: usize,
    /// Local decision error probability of every node.
    pub epsilon: f64,
    /// Prior over the state sequence.
    pub state_prior: StatePrior,
    /// Prior over the Byzantine placement, shared by the generator and
    /// the fusion rule.
    pub byz_prior: ByzantinePrior,
    /// Whether errors count per bit or per sequence.
    pub metric: ErrorMetric,
}

impl OptimalFusionGame {
    /// The detection setup this game plays over.
    pub fn setup(&self) -> DetectionSetup {
        DetectionSetup {
            n: self.n,
            m: self.m,
            epsilon: self.epsilon,
            state_prior: self.state_prior,
            byz_prior: self.byz_prior,
        }
    }
}

impl PayoffScenario for OptimalFusionGame {
    fn name(&self) -> String {
        format!(
            "optimal-map n={} m={} epsilon={} state={:?} byz={:?} metric={:?}",
            self.n, self.m, self.epsilon, self.state_prior, self.byz_prior, self.metric
        )
    }

    fn units_per_trial(&self) -> u64 {
        match self.metric {
            ErrorMetric::PerBit => self.m as u64,
            ErrorMetric::PerSequence => 1,
        }
    }

    fn validate_grid(&self, grid: &StrategyGrid) -> Result<()> {
        self.setup().validate()?;
        check_unit_interval("attacker", "flip probabilities", grid.attacker())?;
        check_unit_interval("defender", "assumed flip probabilities", grid.defender())
    }

    fn accumulate_trial(
        &self,
        attacker: f64,
        defenders: &[f64],
        seed: u64,
        trial: u64,
        errors: &mut [u64],
    ) -> Result<()> {
        if errors.len() != defenders.len() {
            return Err(Error::mismatch(format!(
                "{} error slots for {} defender strategies",
                errors.len(),
                defenders.len()
            )));
        }
        let gen_channel = LocalChannel::new(self.epsilon, attacker)?;
        let (states, reports) = draw_window(
            seed,
            trial,
            self.m,
            self.n,
            &self.state_prior,
            &self.byz_prior,
            &gen_channel,
        )?;
        for (slot, &assumed) in errors.iter_mut().zip(defenders) {
            let cfg = crate::optimal::MapConfig::new(
                self.byz_prior,
                LocalChannel::new(self.epsilon, assumed)?,
            );
            let decided = crate::optimal::map_decide(&reports, &cfg)?;
            let wrong = decided.hamming_distance(&states)?;
            *slot += match self.metric {
                ErrorMetric::PerBit => wrong as u64,
                ErrorMetric::PerSequence => u64::from(wrong > 0),
            };
        }
        Ok(())
    }
}

/// Which log-ratio form the soft defence accumulates per epoch.
///
/// Both forms share the same per-epoch joint probabilities; they differ
/// only in whether the orientation by the node's own report survives.
/// The signed form separates honest nodes from full-flip Byzantines far
/// more sharply and is the one that tracks the published soft-isolation
/// payoffs; the magnitude form follows the formula as printed. See the
/// isolation module docs for the derivation connecting the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftStatistic {
    /// Signed agreement log-ratios (identity-test orientation).
    #[default]
    SignedAgreement,
    /// Absolute log-ratios (magnitude of the same per-epoch values).
    JointLogRatio,
}

/// Which reputation statistic the isolation defence scores nodes with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IsolationScheme {
    /// Hard reputations: count of epochs agreeing with the intermediate
    /// majority decision. Defender strategies are integer thresholds
    /// `eta` in `0..=m` (as `f64` grid values); a node survives iff its
    /// count is at least `eta`.
    Hard,
    /// Soft reputations: summed per-epoch log-likelihood ratios, signed
    /// or in magnitude per [`SoftStatistic`]. Defender strategies are
    /// fractions `kappa` in `[0, 1]` mapped per trial to the threshold
    /// `min + kappa * (max - min)` over that window's realized scores,
    /// so `kappa = 0` keeps everyone and `kappa = 1` keeps only the top
    /// scorer(s); a uniform `kappa` grid quantizes the realized
    /// reliability interval into evenly spaced levels.
    Soft {
        /// Per-epoch statistic the window scores accumulate.
        statistic: SoftStatistic,
        /// Contamination level the defender assumes.
        alpha_guess: f64,
        /// Flip probability the defender assumes.
        p_mal_guess: f64,
        /// Per-epoch prior `P(H0)` the scoring uses.
        prior0: f64,
    },
}

/// Attacker flips reports; defender picks the isolation threshold of a
/// reputation-based defence, scored and fused over the same window.
///
/// Per trial: draw the window, compute reputations under the configured
/// [`IsolationScheme`], then for every defender threshold isolate and fuse
/// with the majority of survivors, counting per-bit errors. The window is
/// both the evidence for reputations and the sequence being decided.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationGame {
    /// Number of nodes.
    pub n: usize,
    /// Window length (epochs scored and decided).
    pub m: usize,
    /// Local detection probability; false alarm is `1 - p_d`, so the
    /// local error probability is symmetric.
    pub p_d: f64,
    /// Prior over the state sequence.
    pub state_prior: StatePrior,
    /// Prior over the Byzantine placement.
    pub byz_prior: ByzantinePrior,
    /// Reputation statistic and its parameters.
    pub scheme: IsolationScheme,
}

impl IsolationGame {
    fn epsilon(&self) -> f64 {
        1.0 - self.p_d
    }

    /// Intermediate count threshold: at least half the nodes.
    fn intermediate_l(&self) -> usize {
        self.n.div_ceil(2)
    }

    fn window_scores(&self, reports: &ReportMatrix) -> Result<ReputationScores> {
        match self.scheme {
            IsolationScheme::Hard => {
                let d_int = intermediate_decisions(reports, self.intermediate_l())?;
                hard_scores(reports, &d_int)
            }
            IsolationScheme::Soft {
                statistic,
                alpha_guess,
                p_mal_guess,
                prior0,
            } => {
                let perf = NodePerformance::symmetric(self.n, self.epsilon())?;
                match statistic {
                    SoftStatistic::SignedAgreement => {
                        agreement_scores(reports, alpha_guess, p_mal_guess, &perf, prior0)
                    }
                    SoftStatistic::JointLogRatio => {
                        soft_scores(reports, alpha_guess, p_mal_guess, &perf, prior0)
                    }
                }
            }
        }
    }

    /// Monte-Carlo ROC of the isolation stage: for every defender
    /// strategy value, the probability that an honest node and that a
    /// Byzantine node get isolated, averaged over `trials` windows drawn
    /// at attacker strength `attacker`.
    ///
    /// Strategy values are interpreted exactly as in the payoff game
    /// (integer score thresholds for the hard scheme, realized-range
    /// fractions for the soft scheme). Windows without any node of a
    /// class contribute nothing to that class's rate. Counts accumulate
    /// as integers over sub-seeded trials, so the curve is identical for
    /// any thread count.
    pub fn isolation_roc(
        &self,
        attacker: f64,
        defenders: &[f64],
        trials: u64,
        seed: u64,
    ) -> Result<Vec<RocPoint>> {
        let grid = StrategyGrid::new(vec![attacker], defenders.to_vec())?;
        self.validate_grid(&grid)?;
        if trials == 0 {
            return Err(Error::param("isolation ROC needs at least one trial"));
        }
        let gen_channel = LocalChannel::new(self.epsilon(), attacker)?;
        let k = defenders.len();
        // Per threshold: isolated-honest, honest-total, isolated-byz, byz-total.
        let zero = || vec![[0u64; 4]; k];
        let counts = (0..trials)
            .into_par_iter()
            .try_fold(zero, |mut acc, trial| {
                let (_, reports) = draw_window(
                    seed,
                    trial,
                    self.m,
                    self.n,
                    &self.state_prior,
                    &self.byz_prior,
                    &gen_channel,
                )?;
                let scores = self.window_scores(&reports)?;
                let (lo, hi) = score_range(scores.as_slice());
                let placement = reports.placement();
                for (slot, &strategy) in acc.iter_mut().zip(defenders) {
                    let eta = match self.scheme {
                        IsolationScheme::Hard => strategy,
                        IsolationScheme::Soft { .. } => lo + strategy * (hi - lo),
                    };
                    for (i, &s) in scores.as_slice().iter().enumerate() {
                        let byz = placement.is_byzantine(i);
                        let iso = u64::from(s < eta);
                        if byz {
                            slot[2] += iso;
                            slot[3] += 1;
                        } else {
                            slot[0] += iso;
                            slot[1] += 1;
                        }
                    }
                }
                Ok::<_, Error>(acc)
            })
            .try_reduce(zero, |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for (u, v) in x.iter_mut().zip(y) {
                        *u += v;
                    }
                }
                Ok(a)
            })?;
        Ok(defenders
            .iter()
            .zip(&counts)
            .map(|(&threshold, c)| RocPoint {
                threshold,
                honest: if c[1] > 0 { c[0] as f64 / c[1] as f64 } else { 0.0 },
                byzantine: if c[3] > 0 { c[2] as f64 / c[3] as f64 } else { 0.0 },
            })
            .collect())
    }
}

/// One point of an isolation ROC: the probability that an honest and
/// that a Byzantine node are isolated at a given defender strategy value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Defender strategy value (threshold or realized-range fraction).
    pub threshold: f64,
    /// Probability an honest node is isolated.
    pub honest: f64,
    /// Probability a Byzantine node is isolated.
    pub byzantine: f64,
}

impl PayoffScenario for IsolationGame {
    fn name(&self) -> String {
        format!(
            "isolation n={} m={} p_d={} state={:?} byz={:?} scheme={:?}",
            self.n, self.m, self.p_d, self.state_prior, self.byz_prior, self.scheme
        )
    }

    fn units_per_trial(&self) -> u64 {
        self.m as u64
    }

    fn validate_grid(&self, grid: &StrategyGrid) -> Result<()> {
        DetectionSetup {
            n: self.n,
            m: self.m,
            epsilon: self.epsilon(),
            state_prior: self.state_prior,
            byz_prior: self.byz_prior,
        }
        .validate()?;
        check_unit_interval("attacker", "flip probabilities", grid.attacker())?;
        match self.scheme {
            IsolationScheme::Hard => {
                if let Some(bad) = grid
                    .defender()
                    .iter()
                    .find(|v| v.fract() != 0.0 || **v < 0.0 || **v > self.m as f64)
                {
                    return Err(Error::param(format!(
                        "hard-isolation thresholds must be integers in 0..={}, got {bad}",
                        self.m
                    )));
                }
                Ok(())
            }
            IsolationScheme::Soft {
                statistic: _,
                alpha_guess,
                p_mal_guess,
                prior0,
            } => {
                check_unit_interval("defender", "threshold fractions", grid.defender())?;
                for (name, v) in [
                    ("alpha_guess", alpha_guess),
                    ("p_mal_guess", p_mal_guess),
                    ("prior0", prior0),
                ] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::param(format!(
                            "{name} must be a probability, got {v}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn accumulate_trial(
        &self,
        attacker: f64,
        defenders: &[f64],
        seed: u64,
        trial: u64,
        errors: &mut [u64],
    ) -> Result<()> {
        if errors.len() != defenders.len() {
            return Err(Error::mismatch(format!(
                "{} error slots for {} defender strategies",
                errors.len(),
                defenders.len()
            )));
        }
        let gen_channel = LocalChannel::new(self.epsilon(), attacker)?;
        let (states, reports) = draw_window(
            seed,
            trial,
            self.m,
            self.n,
            &self.state_prior,
            &self.byz_prior,
            &gen_channel,
        )?;
        let scores = self.window_scores(&reports)?;
        let (lo, hi) = score_range(scores.as_slice());
        for (slot, &strategy) in errors.iter_mut().zip(defenders) {
            let eta = match self.scheme {
                IsolationScheme::Hard => strategy,
                IsolationScheme::Soft { .. } => lo + strategy * (hi - lo),
            };
            let policy = IsolationPolicy::new(eta, self.intermediate_l());
            // Fresh fallback stream per column: the all-isolated coin
            // flips are identical whatever the thread count or column.
            let mut fallback = trial_rng(seed, streams::FALLBACK, trial);
            let outcome = isolate_and_fuse(&reports, &scores, &policy, &mut fallback)?;
            *slot += outcome.decision.hamming_distance(&states)? as u64;
        }
        Ok(())
    }
}

fn score_range(scores: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in scores {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    (lo, hi)
}

/// The censored-consensus detection game: the attacker forces corrupted
/// measurements to strength `delta` (its strategy value), the defender
/// censors every measurement whose magnitude reaches `eta` (its strategy
/// value), and the payoff is the probability that the survivors' average
/// lands on the wrong side of zero.
///
/// The payoff is defined directly on the survivor mean — which is exactly
/// what average consensus converges to whenever the surviving subgraph is
/// connected (always true on a complete graph, and assumed for the
/// topologies this game is played over). For the topology-aware pipeline,
/// including disconnection handling, see [`crate::consensus::cdd_trial`].
///
/// Per trial the hypothesis is a fair coin, the honest measurements are
/// Gaussian with mean `-mu`/`+mu` under `H0`/`H1`, and the corrupted set
/// is drawn once; rows (attacker strengths) and columns (thresholds) all
/// reuse those draws, so cells are coupled by common random numbers. When
/// censoring removes every node the decision falls back to a per-trial
/// fair coin.
#[derive(Debug, Clone, PartialEq)]
pub struct CddGame {
    /// Number of nodes.
    pub n: usize,
    /// How the corrupted node set is drawn each trial.
    pub selection: NodeSelection,
    /// Honest measurement mean magnitude.
    pub mu: f64,
    /// Honest measurement standard deviation.
    pub sigma: f64,
}

impl CddGame {
    fn model(&self) -> Result<MeasurementModel> {
        MeasurementModel::new(self.mu, self.sigma, self.n)
    }
}

impl PayoffScenario for CddGame {
    fn name(&self) -> String {
        format!(
            "consensus-cdd n={} selection={:?} mu={} sigma={}",
            self.n, self.selection, self.mu, self.sigma
        )
    }

    fn units_per_trial(&self) -> u64 {
        1
    }

    fn validate_grid(&self, grid: &StrategyGrid) -> Result<()> {
        self.model()?;
        self.selection.validate_for(self.n)?;
        if let Some(bad) = grid
            .attacker()
            .iter()
            .find(|d| !(d.is_finite() && **d >= 0.0))
        {
            return Err(Error::param(format!(
                "attack strengths must be finite and >= 0, got {bad}"
            )));
        }
        if let Some(bad) = grid.defender().iter().find(|e| e.is_nan() || **e < 0.0) {
            return Err(Error::param(format!(
                "censoring thresholds must be >= 0, got {bad}"
            )));
        }
        Ok(())
    }

    fn accumulate_trial(
        &self,
        attacker: f64,
        defenders: &[f64],
        seed: u64,
        trial: u64,
        errors: &mut [u64],
    ) -> Result<()> {
        if errors.len() != defenders.len() {
            return Err(Error::mismatch(format!(
                "{} error slots for {} defender strategies",
                errors.len(),
                defenders.len()
            )));
        }
        let model = self.model()?;
        let hypothesis = trial_rng(seed, streams::STATES, trial).random::<f64>() < 0.5;
        let mut attacked = model.sample(
            hypothesis,
            &mut trial_rng(seed, streams::MEASUREMENTS, trial),
        );
        let corrupted = self
            .selection
            .sample(self.n, &mut trial_rng(seed, streams::ATTACK, trial))?;
        let fake = if hypothesis { -attacker } else { attacker };
        for &i in &corrupted {
            attacked[i] = fake;
        }
        let coin = trial_rng(seed, streams::FALLBACK, trial).random::<f64>() < 0.5;
        for (slot, &eta) in errors.iter_mut().zip(defenders) {
            // Inline censoring + survivor mean: the connected-survivor
            // consensus decision. Sign of the sum is the sign of the mean.
            let mut sum = 0.0;
            let mut kept = 0usize;
            for &x in &attacked {
                if x.abs() < eta {
                    sum += x;
                    kept += 1;
                }
            }
            let decision = if kept == 0 { coin } else { sum > 0.0 };
            *slot += u64::from(decision != hypothesis);
        }
        Ok(())
    }
}
