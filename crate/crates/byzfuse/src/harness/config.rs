//! Experiment configuration: one TOML document per experiment.
//!
//! A configuration names the scenario (`scenario = "..."`), supplies its
//! parameters in a `[params]` table, and may override the run-level knobs
//! (`trials`, `master_seed`, `out_dir`, `error_metric`). Every knob left
//! out is filled in by [`ExperimentConfig::materialize`], so a config that
//! has been loaded through [`ExperimentConfig::from_toml`] always has
//! every field explicit; the FNV-1a hash recorded in result files is
//! taken over that materialized form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consensus::NodeSelection;
use crate::error::{Error, Result};
use crate::game::SoftStatistic;
use crate::model::{ByzantinePrior, ErrorMetric, StatePrior};
use crate::mp::MpConfig;

/// A complete experiment description.
///
/// `trials`, `master_seed`, `out_dir`, and `error_metric` are optional in
/// the TOML source; [`materialize`](Self::materialize) fills them with the
/// scenario's defaults (5·10⁴ trials for the fusion-game scenarios, 10⁵
/// for message-passing benchmarks and consensus games; seed 7; output
/// directory `results`; per-bit errors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Experiment name; used as the stem of every output file.
    pub name: String,
    /// Free-form description shown by `list-configs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// What published table or figure this run reproduces, described by
    /// its setting (bundled configs always carry one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Monte-Carlo trials per payoff cell / sweep point.
    #[serde(default)]
    pub trials: Option<u64>,
    /// Master seed; every random stream of the run derives from it.
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Directory the result files are written into.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// How decision errors are counted where the scenario offers a
    /// choice (the MAP fusion game and single runs).
    #[serde(default)]
    pub error_metric: Option<ErrorMetric>,
    /// The scenario and its parameters.
    #[serde(flatten)]
    pub scenario: ScenarioSpec,
}

/// Scenario dispatch: which experiment family runs and with what
/// parameters. Serialized as `scenario = "<kind>"` plus a `[params]`
/// table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", content = "params", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// MAP fusion game: attacker picks the flip probability, defender
    /// picks the flip probability the MAP rule assumes.
    OptimalGame(OptimalGameParams),
    /// Isolation defence game: attacker picks the flip probability,
    /// defender picks the reputation threshold.
    IsolationGame(IsolationGameParams),
    /// Message-passing benchmark sweeps (against MAP or majority, over
    /// contamination levels or window lengths).
    MpBenchmark(MpBenchmarkParams),
    /// Censoring game on consensus-style Gaussian measurements: attacker
    /// picks the fake value, defender picks the censoring threshold.
    ConsensusGame(ConsensusGameParams),
    /// One fusion rule at one operating point: a single error estimate.
    SingleRun(SingleRunParams),
    /// Four-defence comparison (majority, hard isolation, soft
    /// isolation, MAP) across a list of Byzantine priors.
    Comparison(ComparisonParams),
}

impl ScenarioSpec {
    /// The scenario keyword as it appears in config files.
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioSpec::OptimalGame(_) => "optimal_game",
            ScenarioSpec::IsolationGame(_) => "isolation_game",
            ScenarioSpec::MpBenchmark(_) => "mp_benchmark",
            ScenarioSpec::ConsensusGame(_) => "consensus_game",
            ScenarioSpec::SingleRun(_) => "single_run",
            ScenarioSpec::Comparison(_) => "comparison",
        }
    }

    /// Per-scenario default trial count.
    pub fn default_trials(&self) -> u64 {
        match self {
            ScenarioSpec::OptimalGame(_)
            | ScenarioSpec::IsolationGame(_)
            | ScenarioSpec::SingleRun(_)
            | ScenarioSpec::Comparison(_) => 50_000,
            ScenarioSpec::MpBenchmark(_) | ScenarioSpec::ConsensusGame(_) => 100_000,
        }
    }
}

/// Parameters of the MAP fusion game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalGameParams {
    /// Number of nodes.
    pub n: usize,
    /// Window length (epochs).
    pub m: usize,
    /// Local decision error probability.
    pub epsilon: f64,
    /// Prior over the state sequence (default: fair i.i.d. bits).
    #[serde(default = "default_state_prior")]
    pub state_prior: StatePrior,
    /// Prior over the Byzantine placement.
    pub byz_prior: ByzantinePrior,
    /// Attacker flip probabilities (default `0.5, 0.6, …, 1.0`).
    #[serde(default = "default_p_mal_grid")]
    pub attacker_grid: Vec<f64>,
    /// Flip probabilities the defender may assume (same default).
    #[serde(default = "default_p_mal_grid")]
    pub defender_grid: Vec<f64>,
}

/// Parameters of the isolation defence game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationGameParams {
    /// Number of nodes.
    pub n: usize,
    /// Window length (epochs scored and decided).
    pub m: usize,
    /// Local detection probability (local error is `1 - p_d`).
    pub p_d: f64,
    /// Prior over the state sequence (default: fair i.i.d. bits).
    #[serde(default = "default_state_prior")]
    pub state_prior: StatePrior,
    /// Prior over the Byzantine placement.
    pub byz_prior: ByzantinePrior,
    /// Attacker flip probabilities (default `0.6, 0.7, …, 1.0`).
    #[serde(default = "default_attack_grid_isolation")]
    pub attacker_grid: Vec<f64>,
    /// The reputation scheme and its threshold grid.
    pub defence: DefenceParams,
}

/// Isolation defence selection inside an isolation-game config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum DefenceParams {
    /// Hard agreement counting; thresholds are integers in `0..=m`.
    Hard {
        /// Threshold grid (default: every integer `0..=m`).
        #[serde(default)]
        defender_grid: Option<Vec<f64>>,
    },
    /// Soft log-likelihood reputations; the defender grid is a ladder of
    /// realized-range fractions.
    Soft {
        /// Number of interior ladder rungs `k / (levels + 1)`,
        /// `k = 1..=levels` (default 18).
        #[serde(default = "default_soft_levels")]
        levels: usize,
        /// Per-epoch statistic (default: signed agreement).
        #[serde(default)]
        statistic: SoftStatistic,
        /// Contamination level the scoring assumes (default: the mean
        /// Byzantine fraction of `byz_prior`).
        #[serde(default)]
        alpha_guess: Option<f64>,
        /// Flip probability the scoring assumes (default 1.0).
        #[serde(default = "default_one")]
        p_mal_guess: f64,
        /// Per-epoch prior `P(H0)` of the scoring (default 0.5).
        #[serde(default = "default_half")]
        prior0: f64,
    },
}

/// Parameters of a message-passing benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpBenchmarkParams {
    /// Number of nodes.
    pub n: usize,
    /// Local decision error probability.
    pub epsilon: f64,
    /// State flip probability of the Markov prior (`0.5` = i.i.d.).
    #[serde(default = "default_half")]
    pub rho: f64,
    /// Message-passing iteration budget (default 5).
    #[serde(default)]
    pub iterations: Option<usize>,
    /// What is swept and against which baseline.
    pub sweep: SweepParams,
}

/// The axis a message-passing benchmark sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepParams {
    /// Sweep the contamination level at a fixed window length; both
    /// decoders believe the true `alpha` and `p_mal`.
    Alpha {
        /// Window length.
        m: usize,
        /// Contamination levels (each is the true independent-placement
        /// probability and the decoders' belief).
        alphas: Vec<f64>,
        /// Attacker flip probability.
        p_mal: f64,
        /// Reference decoder run on the same trials.
        #[serde(default)]
        baseline: Baseline,
    },
    /// Sweep the window length at a fixed contamination level, running
    /// message passing once per attacker flip probability; the decoder's
    /// belief matches the attack it faces.
    Window {
        /// True and believed contamination level.
        alpha: f64,
        /// Window lengths to sweep.
        windows: Vec<usize>,
        /// Attacker flip probabilities compared at every window length.
        p_mals: Vec<f64>,
    },
}

/// Reference decoder of an alpha sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Exact MAP fusion (exhaustive window enumeration).
    #[default]
    Map,
    /// Per-epoch majority vote.
    Majority,
}

/// Parameters of the consensus censoring game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusGameParams {
    /// Number of nodes.
    pub n: usize,
    /// How the corrupted node set is drawn each trial.
    pub selection: NodeSelection,
    /// Honest measurement mean magnitude.
    pub mu: f64,
    /// Honest measurement standard deviation (default 1.0).
    #[serde(default = "default_one")]
    pub sigma: f64,
    /// Attacker fake-value magnitudes `Delta`.
    pub attacker_grid: Vec<f64>,
    /// Defender censoring thresholds `eta`.
    pub defender_grid: Vec<f64>,
}

/// Parameters of a single-rule error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRunParams {
    /// Number of nodes.
    pub n: usize,
    /// Window length (epochs).
    pub m: usize,
    /// Local decision error probability.
    pub epsilon: f64,
    /// Prior over the state sequence (default: fair i.i.d. bits).
    #[serde(default = "default_state_prior")]
    pub state_prior: StatePrior,
    /// Prior over the Byzantine placement.
    pub byz_prior: ByzantinePrior,
    /// Attacker flip probability.
    pub p_mal: f64,
    /// The fusion rule under test.
    pub rule: RuleParams,
}

/// Fusion rule selection for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RuleParams {
    /// Per-epoch majority vote.
    Majority,
    /// Per-epoch `k`-out-of-`n` vote.
    KOutOfN {
        /// Votes required to decide 1.
        k: usize,
    },
    /// Per-epoch AND rule (all nodes must report 1).
    And,
    /// Per-epoch OR rule (any node reporting 1 decides 1).
    Or,
    /// Jointly optimal MAP fusion over the window.
    Map {
        /// Flip probability the rule assumes (default: the true one).
        #[serde(default)]
        p_mal_fc: Option<f64>,
    },
    /// Loopy sum-product message passing over the window.
    Mp {
        /// Flip probability the decoder assumes (default: the true one).
        #[serde(default)]
        p_mal_fc: Option<f64>,
        /// Contamination level the decoder assumes (default: the mean
        /// Byzantine fraction of `byz_prior`).
        #[serde(default)]
        alpha_guess: Option<f64>,
        /// Iteration budget (default 5).
        #[serde(default)]
        iterations: Option<usize>,
    },
}

/// Parameters of the four-defence comparison.
///
/// Every row is one Byzantine prior; every defence is solved as a
/// zero-sum game over `attacker_grid` and its own defender grid, and the
/// row reports the four equilibrium error probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    /// Number of nodes.
    pub n: usize,
    /// Window length (epochs).
    pub m: usize,
    /// Local decision error probability.
    pub epsilon: f64,
    /// Prior over the state sequence (default: fair i.i.d. bits).
    #[serde(default = "default_state_prior")]
    pub state_prior: StatePrior,
    /// One Byzantine prior per table row.
    pub rows: Vec<ByzantinePrior>,
    /// Attacker flip probabilities (default `0.5, 0.6, …, 1.0`).
    #[serde(default = "default_p_mal_grid")]
    pub attacker_grid: Vec<f64>,
    /// Soft-isolation ladder rungs (default 18).
    #[serde(default = "default_soft_levels")]
    pub soft_levels: usize,
    /// Hard-isolation threshold grid (default: every integer `0..=m`).
    #[serde(default)]
    pub hard_grid: Option<Vec<f64>>,
    /// Defender grid of the MAP column (default: `attacker_grid`).
    #[serde(default)]
    pub opt_defender_grid: Option<Vec<f64>>,
}

fn default_state_prior() -> StatePrior {
    StatePrior::Iid { p1: 0.5 }
}

fn default_p_mal_grid() -> Vec<f64> {
    vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
}

fn default_attack_grid_isolation() -> Vec<f64> {
    vec![0.6, 0.7, 0.8, 0.9, 1.0]
}

fn default_soft_levels() -> usize {
    18
}

fn default_one() -> f64 {
    1.0
}

fn default_half() -> f64 {
    0.5
}

/// Default master seed for runs that do not pin one.
pub const DEFAULT_MASTER_SEED: u64 = 7;

/// Default output directory.
pub const DEFAULT_OUT_DIR: &str = "results";

impl ExperimentConfig {
    /// Parse a TOML document and materialize all defaults.
    ///
    /// `origin` names the source (a file path or a bundled-config name)
    /// and is echoed in error messages.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let parsed: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        let cfg = parsed.materialize();
        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::Config {
                path: origin.to_string(),
                msg: other.to_string(),
            },
        })?;
        Ok(cfg)
    }

    /// Load a config file from disk.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Serialize back to TOML (canonical field order).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config {
            path: self.name.clone(),
            msg: format!("serialization failed: {e}"),
        })
    }

    /// Fill every optional knob with its default, returning a config in
    /// which all fields are explicit. Idempotent.
    pub fn materialize(&self) -> Self {
        let mut cfg = self.clone();
        cfg.trials = Some(self.trials.unwrap_or_else(|| self.scenario.default_trials()));
        cfg.master_seed = Some(self.master_seed.unwrap_or(DEFAULT_MASTER_SEED));
        cfg.out_dir = Some(
            self.out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        );
        cfg.error_metric = Some(self.error_metric.unwrap_or_default());
        match &mut cfg.scenario {
            ScenarioSpec::IsolationGame(p) => {
                let m = p.m;
                let byz = p.byz_prior;
                match &mut p.defence {
                    DefenceParams::Hard { defender_grid } => {
                        if defender_grid.is_none() {
                            *defender_grid = Some(integer_grid(m));
                        }
                    }
                    DefenceParams::Soft { alpha_guess, .. } => {
                        if alpha_guess.is_none() {
                            *alpha_guess = Some(mean_byzantine_fraction(&byz, p.n));
                        }
                    }
                }
            }
            ScenarioSpec::MpBenchmark(p) => {
                if p.iterations.is_none() {
                    p.iterations = Some(MpConfig::DEFAULT_ITERATIONS);
                }
            }
            ScenarioSpec::SingleRun(p) => {
                if let RuleParams::Mp {
                    alpha_guess,
                    iterations,
                    ..
                } = &mut p.rule
                {
                    if alpha_guess.is_none() {
                        *alpha_guess = Some(mean_byzantine_fraction(&p.byz_prior, p.n));
                    }
                    if iterations.is_none() {
                        *iterations = Some(MpConfig::DEFAULT_ITERATIONS);
                    }
                }
            }
            ScenarioSpec::Comparison(p) => {
                if p.hard_grid.is_none() {
                    p.hard_grid = Some(integer_grid(p.m));
                }
                if p.opt_defender_grid.is_none() {
                    p.opt_defender_grid = Some(p.attacker_grid.clone());
                }
            }
            ScenarioSpec::OptimalGame(_) | ScenarioSpec::ConsensusGame(_) => {}
        }
        cfg
    }

    /// Trials after materialization (panics only on a config that was
    /// never materialized — all loaders materialize).
    pub fn trials(&self) -> u64 {
        self.trials.expect("config is materialized")
    }

    /// Master seed after materialization.
    pub fn master_seed(&self) -> u64 {
        self.master_seed.expect("config is materialized")
    }

    /// Output directory after materialization.
    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().expect("config is materialized")
    }

    /// Error metric after materialization.
    pub fn error_metric(&self) -> ErrorMetric {
        self.error_metric.expect("config is materialized")
    }

    /// FNV-1a 64-bit hash of the canonical (materialized) TOML form,
    /// rendered as 16 hex digits.
    pub fn hash(&self) -> Result<String> {
        let canonical = self.materialize().to_toml()?;
        Ok(format!("{:016x}", fnv1a64(canonical.as_bytes())))
    }

    /// Cheap structural validation; run automatically by the loaders.
    /// Deep parameter validation happens again when the scenario objects
    /// are built, so nothing invalid can slip through to a run.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config {
                path: "name".into(),
                msg: "experiment name must not be empty".into(),
            });
        }
        if self
            .name
            .chars()
            .any(|c| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(Error::Config {
                path: "name".into(),
                msg: format!(
                    "experiment name {:?} must use only ASCII letters, digits, '_' or '-' \
                     (it becomes the output file stem)",
                    self.name
                ),
            });
        }
        if self.trials == Some(0) {
            return Err(Error::Config {
                path: "trials".into(),
                msg: "trials must be at least 1".into(),
            });
        }
        let metric_fixed = !matches!(
            self.scenario,
            ScenarioSpec::OptimalGame(_) | ScenarioSpec::SingleRun(_)
        );
        if metric_fixed && self.error_metric == Some(crate::model::ErrorMetric::PerSequence) {
            return Err(Error::Config {
                path: "error_metric".into(),
                msg: format!(
                    "the {} scenario always counts its native error unit; \
                     per_sequence is only meaningful for optimal_game and single_run",
                    self.scenario.kind()
                ),
            });
        }
        match &self.scenario {
            ScenarioSpec::MpBenchmark(p) => {
                let empty = match &p.sweep {
                    SweepParams::Alpha { alphas, .. } => alphas.is_empty(),
                    SweepParams::Window {
                        windows, p_mals, ..
                    } => windows.is_empty() || p_mals.is_empty(),
                };
                if empty {
                    return Err(Error::Config {
                        path: "params.sweep".into(),
                        msg: "sweep grids must not be empty".into(),
                    });
                }
            }
            ScenarioSpec::Comparison(p) => {
                if p.rows.is_empty() {
                    return Err(Error::Config {
                        path: "params.rows".into(),
                        msg: "comparison needs at least one Byzantine prior row".into(),
                    });
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// `0.0, 1.0, …, m` as floats: the hard-isolation threshold grid.
pub(crate) fn integer_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|k| k as f64).collect()
}

/// Interior ladder rungs `k / (levels + 1)` for `k = 1..=levels`: the
/// soft-isolation defender grid.
pub(crate) fn soft_ladder(levels: usize) -> Vec<f64> {
    (1..=levels)
        .map(|k| k as f64 / (levels + 1) as f64)
        .collect()
}

/// Expected fraction of Byzantine nodes under a placement prior: the
/// natural default for every "assumed contamination" knob.
pub fn mean_byzantine_fraction(prior: &ByzantinePrior, n: usize) -> f64 {
    match prior {
        ByzantinePrior::IndependentAlpha { alpha } => *alpha,
        ByzantinePrior::FixedCount { n_b } => *n_b as f64 / n as f64,
        ByzantinePrior::BoundedMaxEnt { h } => {
            // P(|B| = k) ∝ C(n, k) for k < h; E|B| by direct summation in
            // log space to stay finite for large n.
            let mut weight = 0.0;
            let mut mean = 0.0;
            for k in 0..(*h).min(n + 1) {
                let w = statrs::function::factorial::ln_binomial(n as u64, k as u64).exp();
                weight += w;
                mean += k as f64 * w;
            }
            if weight > 0.0 {
                mean / (weight * n as f64)
            } else {
                0.0
            }
        }
        ByzantinePrior::Unconstrained => 0.5,
    }
}

/// FNV-1a 64-bit hash.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
