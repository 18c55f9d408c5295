//! Experiment execution: dispatch a config to the right modules, collect
//! a [`ResultRecord`], and persist it as CSV + JSON artifacts.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{analytic_attack_success, AttackSpec, MeasurementModel};
use crate::error::{Error, Result};
use crate::fusion::vote;
use crate::game::{
    analyze_equilibrium, estimate_payoffs, CddGame, Equilibrium, IsolationGame, IsolationScheme,
    OptimalFusionGame, PayoffMatrix, StrategyGrid,
};
use crate::model::{
    generate_reports, sample_placement, sample_states, ByzantinePrior, DetectionSetup,
    ErrorMetric, LocalChannel, StatePrior,
};
use crate::mp::{mp_decide, MpConfig};
use crate::optimal::estimate_error_probability;
use crate::rng::{streams, sub_seed, trial_rng};

use super::config::{
    soft_ladder, Baseline, ComparisonParams, ConsensusGameParams, DefenceParams, ExperimentConfig,
    IsolationGameParams, MpBenchmarkParams, OptimalGameParams, RuleParams, ScenarioSpec,
    SingleRunParams, SweepParams,
};

/// Trials the isolation ROC side-series uses (capped so the ROC never
/// dominates the run's cost).
const ROC_TRIALS_CAP: u64 = 10_000;

/// Sub-seed tag for side-series that must not share draws with the main
/// payoff estimate.
const SIDE_SERIES_STREAM: u64 = 0x51;

/// Sub-seed tag for the per-row games of a comparison run.
const COMPARISON_STREAM: u64 = 0x52;

/// A rectangular table of named numeric columns (sweep results, ROC
/// curves, comparison rows). This is the unit `plot-data` extracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl SeriesTable {
    /// Build a table, checking that every row matches the header width.
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::param("a series table needs at least one column"));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::mismatch(format!(
                "series row {bad} has {} values for {} columns",
                rows[bad].len(),
                columns.len()
            )));
        }
        Ok(SeriesTable { columns, rows })
    }

    /// Column names in order.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Data rows in order.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// One column by name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingSeries(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Write as CSV with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns).map_err(csv_io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// The CSV text of [`write_csv`](Self::write_csv).
    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::param(format!("series CSV not UTF-8: {e}")))
    }

    /// Parse a CSV written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let columns: Vec<String> = r
            .headers()
            .map_err(csv_io)?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_io)?;
            let row = record
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::param(format!("bad series value {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        SeriesTable::new(columns, rows)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Config {
        path: "<series csv>".into(),
        msg: e.to_string(),
    }
}

/// Everything one experiment produced.
///
/// Re-running the same materialized config reproduces every numeric
/// field bit for bit (only `wall_clock_seconds` varies); the config
/// echo plus its hash make the record self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// The materialized config this record was produced from.
    pub config: ExperimentConfig,
    /// FNV-1a hash of the canonical config TOML (16 hex digits).
    pub config_hash: String,
    /// Version of the toolkit that produced the record.
    pub toolkit_version: String,
    /// Wall-clock duration of the computation, in seconds.
    pub wall_clock_seconds: f64,
    /// Estimated payoff matrix (game scenarios).
    pub payoff: Option<PayoffMatrix>,
    /// Per-cell binomial standard errors, same shape as the payoff.
    pub standard_errors: Option<Vec<Vec<f64>>>,
    /// Equilibrium of the payoff matrix (game scenarios).
    pub equilibrium: Option<Equilibrium>,
    /// Named side-series (ROC curves, sweeps, comparison tables).
    pub series: BTreeMap<String, SeriesTable>,
    /// Scenario-specific extras (crossover points, row labels, ...).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub notes: serde_json::Value,
}

impl ResultRecord {
    /// Pretty JSON form of the whole record.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config {
            path: self.config.name.clone(),
            msg: format!("record serialization failed: {e}"),
        })
    }

    /// Parse a record written by [`to_json`](Self::to_json).
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            path: "<result record>".into(),
            msg: e.to_string(),
        })
    }

    /// Load a record file from disk.
    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The plottable series a record can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Isolation ROC: honest vs Byzantine isolation probability along
    /// the defender grid (isolation-game records).
    Roc,
    /// Attack strength vs success probability, Monte-Carlo next to the
    /// closed form (consensus records with an uncensored column).
    DeltaSweep,
    /// Contamination level vs error probability, message passing next
    /// to its baseline (alpha-sweep benchmark records).
    AlphaSweep,
    /// Window length vs error probability per attack (window-sweep
    /// benchmark records).
    WindowSweep,
    /// One row per Byzantine prior, one column per defence
    /// (comparison records).
    Comparison,
    /// Single-point error estimate (single-run records).
    Estimate,
}

impl PlotKind {
    /// The key under which [`ResultRecord::series`] stores this kind.
    pub fn series_key(self) -> &'static str {
        match self {
            PlotKind::Roc => "roc",
            PlotKind::DeltaSweep => "delta_sweep",
            PlotKind::AlphaSweep => "alpha_sweep",
            PlotKind::WindowSweep => "window_sweep",
            PlotKind::Comparison => "comparison",
            PlotKind::Estimate => "estimate",
        }
    }

    /// All kinds, for help text.
    pub fn all() -> &'static [PlotKind] {
        &[
            PlotKind::Roc,
            PlotKind::DeltaSweep,
            PlotKind::AlphaSweep,
            PlotKind::WindowSweep,
            PlotKind::Comparison,
            PlotKind::Estimate,
        ]
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "roc" => Ok(PlotKind::Roc),
            "delta_sweep" => Ok(PlotKind::DeltaSweep),
            "alpha_sweep" => Ok(PlotKind::AlphaSweep),
            "window_sweep" => Ok(PlotKind::WindowSweep),
            "comparison" => Ok(PlotKind::Comparison),
            "estimate" => Ok(PlotKind::Estimate),
            other => Err(Error::param(format!(
                "unknown plot kind {other:?}; expected one of roc, delta_sweep, alpha_sweep, \
                 window_sweep, comparison, estimate"
            ))),
        }
    }
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.series_key())
    }
}

/// Select the series of `kind` from a record.
///
/// Fails with [`Error::MissingSeries`] naming the absent key when the
/// record's scenario did not produce that series.
pub fn emit_plot_data(record: &ResultRecord, kind: PlotKind) -> Result<&SeriesTable> {
    let key = kind.series_key();
    record.series.get(key).ok_or_else(|| {
        Error::MissingSeries(format!(
            "{key} (record {:?} from scenario {} carries: {})",
            record.config.name,
            record.config.scenario.kind(),
            if record.series.is_empty() {
                "no series".to_string()
            } else {
                record
                    .series
                    .keys()
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(", ")
            }
        ))
    })
}

/// Write the series of `kind` as a CSV file.
pub fn write_plot_data(record: &ResultRecord, kind: PlotKind, path: &Path) -> Result<()> {
    let table = emit_plot_data(record, kind)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let file = std::fs::File::create(path)?;
    table.write_csv(file)
}

/// Run one experiment end to end.
///
/// The config is materialized and validated, the scenario dispatched to
/// its modules (all Monte-Carlo work runs on the ambient rayon pool with
/// sub-seeded trials, so the numbers are identical for any worker
/// count), and the artifacts are written into the config's output
/// directory: `<name>.record.json` always, plus `<name>.payoff.csv` /
/// `<name>.payoff.meta.json` / `<name>.equilibrium.json` and one
/// `<name>.<series>.csv` per side-series where applicable.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    let record = compute_record(config)?;
    write_artifacts(&record, record.config.out_dir())?;
    Ok(record)
}

/// [`run_experiment`] without the artifact writing: compute the record
/// only. This is what the deterministic tests compare.
pub fn compute_record(config: &ExperimentConfig) -> Result<ResultRecord> {
    let cfg = config.materialize();
    cfg.validate()?;
    let config_hash = cfg.hash()?;
    let started = Instant::now();
    let outcome = match &cfg.scenario {
        ScenarioSpec::OptimalGame(p) => run_optimal_game(&cfg, p)?,
        ScenarioSpec::IsolationGame(p) => run_isolation_game(&cfg, p)?,
        ScenarioSpec::MpBenchmark(p) => run_mp_benchmark(&cfg, p)?,
        ScenarioSpec::ConsensusGame(p) => run_consensus_game(&cfg, p)?,
        ScenarioSpec::SingleRun(p) => run_single_run(&cfg, p)?,
        ScenarioSpec::Comparison(p) => run_comparison(&cfg, p)?,
    };
    let standard_errors = outcome.payoff.as_ref().map(|m| {
        let (rows, cols) = m.shape();
        (0..rows)
            .map(|a| (0..cols).map(|d| m.std_err(a, d)).collect())
            .collect()
    });
    Ok(ResultRecord {
        config: cfg,
        config_hash,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        payoff: outcome.payoff,
        standard_errors,
        equilibrium: outcome.equilibrium,
        series: outcome.series,
        notes: outcome.notes,
    })
}

/// Write a record's artifacts into `dir`, returning the paths written.
pub fn write_artifacts(record: &ResultRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = &record.config.name;
    let mut written = Vec::new();
    let record_path = dir.join(format!("{stem}.record.json"));
    std::fs::write(&record_path, record.to_json()?)?;
    written.push(record_path);
    if let Some(matrix) = &record.payoff {
        let csv_path = dir.join(format!("{stem}.payoff.csv"));
        let file = std::fs::File::create(&csv_path)?;
        matrix.write_csv(file)?;
        written.push(csv_path);
        let meta_path = dir.join(format!("{stem}.payoff.meta.json"));
        std::fs::write(&meta_path, matrix.metadata().to_json())?;
        written.push(meta_path);
    }
    if let Some(eq) = &record.equilibrium {
        let eq_path = dir.join(format!("{stem}.equilibrium.json"));
        let text = serde_json::to_string_pretty(eq).map_err(|e| Error::Config {
            path: stem.clone(),
            msg: format!("equilibrium serialization failed: {e}"),
        })?;
        std::fs::write(&eq_path, text)?;
        written.push(eq_path);
    }
    for (key, table) in &record.series {
        let path = dir.join(format!("{stem}.{key}.csv"));
        let file = std::fs::File::create(&path)?;
        table.write_csv(file)?;
        written.push(path);
    }
    Ok(written)
}

/// What a scenario runner hands back.
struct ScenarioOutcome {
    payoff: Option<PayoffMatrix>,
    equilibrium: Option<Equilibrium>,
    series: BTreeMap<String, SeriesTable>,
    notes: serde_json::Value,
}

impl ScenarioOutcome {
    fn game(payoff: PayoffMatrix, equilibrium: Equilibrium) -> Self {
        ScenarioOutcome {
            payoff: Some(payoff),
            equilibrium: Some(equilibrium),
            series: BTreeMap::new(),
            notes: serde_json::Value::Null,
        }
    }

    fn series_only(key: &str, table: SeriesTable) -> Self {
        let mut series = BTreeMap::new();
        series.insert(key.to_string(), table);
        ScenarioOutcome {
            payoff: None,
            equilibrium: None,
            series,
            notes: serde_json::Value::Null,
        }
    }
}

/// Attach the "switch decoder" remediation hint to window-capacity errors.
fn with_capacity_hint(e: Error) -> Error {
    match e {
        Error::Capacity(msg) => Error::Capacity(format!(
            "{msg}; exhaustive MAP fusion cannot cover windows this long — use the \
             message-passing decoder (scenario mp_benchmark, or rule = \"mp\" in a \
             single_run) instead"
        )),
        other => other,
    }
}

fn run_optimal_game(cfg: &ExperimentConfig, p: &OptimalGameParams) -> Result<ScenarioOutcome> {
    let scenario = OptimalFusionGame {
        n: p.n,
        m: p.m,
        epsilon: p.epsilon,
        state_prior: p.state_prior,
        byz_prior: p.byz_prior,
        metric: cfg.error_metric(),
    };
    let grid = StrategyGrid::new(p.attacker_grid.clone(), p.defender_grid.clone())?;
    let payoff = estimate_payoffs(&scenario, &grid, cfg.trials(), cfg.master_seed())
        .map_err(with_capacity_hint)?;
    let equilibrium = analyze_equilibrium(&payoff)?;
    Ok(ScenarioOutcome::game(payoff, equilibrium))
}

fn run_isolation_game(cfg: &ExperimentConfig, p: &IsolationGameParams) -> Result<ScenarioOutcome> {
    let (scheme, defender_grid) = isolation_scheme(&p.defence)?;
    let scenario = IsolationGame {
        n: p.n,
        m: p.m,
        p_d: p.p_d,
        state_prior: p.state_prior,
        byz_prior: p.byz_prior,
        scheme,
    };
    let grid = StrategyGrid::new(p.attacker_grid.clone(), defender_grid.clone())?;
    let payoff = estimate_payoffs(&scenario, &grid, cfg.trials(), cfg.master_seed())?;
    let equilibrium = analyze_equilibrium(&payoff)?;
    let mut outcome = ScenarioOutcome::game(payoff, equilibrium);

    // ROC side-series at the strongest attack on the grid: how often the
    // defence isolates honest vs Byzantine nodes at each threshold.
    let strongest = p
        .attacker_grid
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let roc_trials = cfg.trials().min(ROC_TRIALS_CAP);
    let roc_seed = sub_seed(cfg.master_seed(), SIDE_SERIES_STREAM, 0);
    let points = scenario.isolation_roc(strongest, &defender_grid, roc_trials, roc_seed)?;
    let rows = points
        .iter()
        .map(|pt| vec![pt.threshold, pt.honest, pt.byzantine])
        .collect();
    let table = SeriesTable::new(
        vec![
            "threshold".into(),
            "p_iso_honest".into(),
            "p_iso_byzantine".into(),
        ],
        rows,
    )?;
    outcome.series.insert("roc".into(), table);
    outcome.notes = serde_json::json!({ "roc_attacker": strongest, "roc_trials": roc_trials });
    Ok(outcome)
}

/// Translate defence params into the game scheme plus its defender grid.
fn isolation_scheme(defence: &DefenceParams) -> Result<(IsolationScheme, Vec<f64>)> {
    match defence {
        DefenceParams::Hard { defender_grid } => {
            let grid = defender_grid
                .clone()
                .ok_or_else(|| Error::param("hard defence grid missing (config not materialized)"))?;
            Ok((IsolationScheme::Hard, grid))
        }
        DefenceParams::Soft {
            levels,
            statistic,
            alpha_guess,
            p_mal_guess,
            prior0,
        } => {
            let alpha_guess = alpha_guess
                .ok_or_else(|| Error::param("alpha_guess missing (config not materialized)"))?;
            let scheme = IsolationScheme::Soft {
                statistic: *statistic,
                alpha_guess,
                p_mal_guess: *p_mal_guess,
                prior0: *prior0,
            };
            Ok((scheme, soft_ladder(*levels)))
        }
    }
}

fn run_consensus_game(cfg: &ExperimentConfig, p: &ConsensusGameParams) -> Result<ScenarioOutcome> {
    let scenario = CddGame {
        n: p.n,
        selection: p.selection,
        mu: p.mu,
        sigma: p.sigma,
    };
    let grid = StrategyGrid::new(p.attacker_grid.clone(), p.defender_grid.clone())?;
    let payoff = estimate_payoffs(&scenario, &grid, cfg.trials(), cfg.master_seed())?;
    let equilibrium = analyze_equilibrium(&payoff)?;
    let mut outcome = ScenarioOutcome::game(payoff, equilibrium);

    // When the grid contains an effectively uncensored threshold, that
    // column is a pure attack-success sweep; put it next to the closed
    // form so `plot-data delta_sweep` has both.
    let delta_max = p
        .attacker_grid
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (eta_idx, eta_max) = p
        .defender_grid
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    if eta_max > p.mu + delta_max + 10.0 * p.sigma {
        let model = MeasurementModel::new(p.mu, p.sigma, p.n)?;
        let mut rows = Vec::with_capacity(p.attacker_grid.len());
        for (a, &delta) in p.attacker_grid.iter().enumerate() {
            let spec = AttackSpec::new(p.selection, delta)?;
            let analytic = analytic_attack_success(&spec, &model)?;
            rows.push(vec![
                delta,
                outcome.payoff.as_ref().expect("game outcome").get(a, eta_idx),
                analytic,
            ]);
        }
        let table = SeriesTable::new(
            vec!["delta".into(), "p_estimate".into(), "p_analytic".into()],
            rows,
        )?;
        outcome.series.insert("delta_sweep".into(), table);
    }
    Ok(outcome)
}

fn run_mp_benchmark(cfg: &ExperimentConfig, p: &MpBenchmarkParams) -> Result<ScenarioOutcome> {
    let iterations = p
        .iterations
        .ok_or_else(|| Error::param("iterations missing (config not materialized)"))?;
    match &p.sweep {
        SweepParams::Alpha {
            m,
            alphas,
            p_mal,
            baseline,
        } => {
            let mut rows = Vec::with_capacity(alphas.len());
            for &alpha in alphas {
                let setup = MpSetup {
                    n: p.n,
                    m: *m,
                    epsilon: p.epsilon,
                    rho: p.rho,
                    alpha,
                    iterations,
                };
                let (mp_err, base_err) = alpha_sweep_point(
                    &setup,
                    *p_mal,
                    *baseline,
                    cfg.trials(),
                    cfg.master_seed(),
                )
                .map_err(with_capacity_hint)?;
                let samples = (cfg.trials() * *m as u64) as f64;
                let p_mp = mp_err as f64 / samples;
                let p_base = base_err as f64 / samples;
                let ratio = if p_base > 0.0 {
                    p_mp / p_base
                } else if p_mp == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                };
                rows.push(vec![alpha, p_mp, p_base, ratio]);
            }
            let baseline_col = match baseline {
                Baseline::Map => "p_map",
                Baseline::Majority => "p_majority",
            };
            let table = SeriesTable::new(
                vec![
                    "alpha".into(),
                    "p_mp".into(),
                    baseline_col.into(),
                    "ratio".into(),
                ],
                rows,
            )?;
            Ok(ScenarioOutcome::series_only("alpha_sweep", table))
        }
        SweepParams::Window {
            alpha,
            windows,
            p_mals,
        } => {
            let mut rows = Vec::with_capacity(windows.len());
            for &m in windows {
                let setup = MpSetup {
                    n: p.n,
                    m,
                    epsilon: p.epsilon,
                    rho: p.rho,
                    alpha: *alpha,
                    iterations,
                };
                let mut row = vec![m as f64];
                for &p_mal in p_mals {
                    let errors =
                        mp_bit_errors(&setup, p_mal, p_mal, cfg.trials(), cfg.master_seed())?;
                    row.push(errors as f64 / (cfg.trials() * m as u64) as f64);
                }
                rows.push(row);
            }
            let mut columns = vec!["m".to_string()];
            columns.extend(p_mals.iter().map(|v| format!("p_e_pmal_{v}")));
            let table = SeriesTable::new(columns, rows)?;
            let mut outcome = ScenarioOutcome::series_only("window_sweep", table);
            outcome.notes = crossover_notes(&outcome.series["window_sweep"], p_mals);
            Ok(outcome)
        }
    }
}

/// Locate where the best attack switches along a window sweep: the first
/// window length at which the strongest attack differs from the one that
/// was strongest at the shortest window.
fn crossover_notes(table: &SeriesTable, p_mals: &[f64]) -> serde_json::Value {
    if p_mals.len() < 2 || table.rows().is_empty() {
        return serde_json::Value::Null;
    }
    let argmax = |row: &[f64]| -> usize {
        row[1..]
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            })
            .0
    };
    let first = argmax(&table.rows()[0]);
    for row in table.rows() {
        let best = argmax(row);
        if best != first {
            return serde_json::json!({
                "crossover_window": row[0],
                "best_attack_before": p_mals[first],
                "best_attack_after": p_mals[best],
            });
        }
    }
    serde_json::json!({ "crossover_window": null, "best_attack_before": p_mals[first] })
}

/// Fixed part of a message-passing benchmark point.
struct MpSetup {
    n: usize,
    m: usize,
    epsilon: f64,
    rho: f64,
    alpha: f64,
    iterations: usize,
}

impl MpSetup {
    fn state_prior(&self) -> StatePrior {
        StatePrior::Markov {
            rho: self.rho,
            p1: 0.5,
        }
    }

    fn byz_prior(&self) -> ByzantinePrior {
        ByzantinePrior::IndependentAlpha { alpha: self.alpha }
    }

    fn mp_config(&self, p_mal_fc: f64) -> MpConfig {
        let mut cfg = MpConfig::new(self.rho, self.alpha, self.epsilon, p_mal_fc);
        cfg.iterations = self.iterations;
        cfg
    }
}

/// Bit errors of the message-passing decoder over sub-seeded trials.
fn mp_bit_errors(
    setup: &MpSetup,
    p_mal_true: f64,
    p_mal_fc: f64,
    trials: u64,
    seed: u64,
) -> Result<u64> {
    let gen_channel = LocalChannel::new(setup.epsilon, p_mal_true)?;
    let mp_cfg = setup.mp_config(p_mal_fc);
    mp_cfg.validate()?;
    let state_prior = setup.state_prior();
    let byz_prior = setup.byz_prior();
    state_prior.validate()?;
    byz_prior.validate_for(setup.n)?;
    (0..trials)
        .into_par_iter()
        .try_fold(
            || 0u64,
            |acc, t| {
                let (states, reports) =
                    draw_trial(seed, t, setup.m, setup.n, &state_prior, &byz_prior, &gen_channel)?;
                let outcome = mp_decide(&reports, &mp_cfg)?;
                Ok::<u64, Error>(acc + outcome.decision.hamming_distance(&states)? as u64)
            },
        )
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// One alpha-sweep point: bit errors of message passing and the baseline
/// on the same sub-seeded trials.
fn alpha_sweep_point(
    setup: &MpSetup,
    p_mal: f64,
    baseline: Baseline,
    trials: u64,
    seed: u64,
) -> Result<(u64, u64)> {
    let gen_channel = LocalChannel::new(setup.epsilon, p_mal)?;
    let mp_cfg = setup.mp_config(p_mal);
    mp_cfg.validate()?;
    let state_prior = setup.state_prior();
    let byz_prior = setup.byz_prior();
    let map_cfg = match baseline {
        Baseline::Map => Some(crate::optimal::MapConfig::new(
            byz_prior,
            LocalChannel::new(setup.epsilon, p_mal)?,
        )),
        Baseline::Majority => None,
    };
    // Fail fast on capacity before the parallel loop.
    if let Some(cfg) = &map_cfg {
        let (_, reports) = draw_trial(
            seed,
            0,
            setup.m,
            setup.n,
            &state_prior,
            &byz_prior,
            &gen_channel,
        )?;
        crate::optimal::map_decide(&reports, cfg)?;
    }
    (0..trials)
        .into_par_iter()
        .try_fold(
            || (0u64, 0u64),
            |acc, t| {
                let (states, reports) =
                    draw_trial(seed, t, setup.m, setup.n, &state_prior, &byz_prior, &gen_channel)?;
                let mp_out = mp_decide(&reports, &mp_cfg)?;
                let mp_wrong = mp_out.decision.hamming_distance(&states)? as u64;
                let base_wrong = match &map_cfg {
                    Some(cfg) => {
                        let decided = crate::optimal::map_decide(&reports, cfg)?;
                        decided.hamming_distance(&states)? as u64
                    }
                    None => {
                        let mut wrong = 0;
                        for j in 0..setup.m {
                            let column = reports.column(j);
                            let decided = vote(&crate::fusion::VotingRule::Majority, &column)?;
                            wrong += u64::from(decided != states.get(j));
                        }
                        wrong
                    }
                };
                Ok::<(u64, u64), Error>((acc.0 + mp_wrong, acc.1 + base_wrong))
            },
        )
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
}

/// Draw one trial's window with the standard stream layout.
fn draw_trial(
    seed: u64,
    trial: u64,
    m: usize,
    n: usize,
    state_prior: &StatePrior,
    byz_prior: &ByzantinePrior,
    gen_channel: &LocalChannel,
) -> Result<(crate::model::StateSequence, crate::model::ReportMatrix)> {
    let mut rng = trial_rng(seed, streams::STATES, trial);
    let states = sample_states(state_prior, m, &mut rng)?;
    let mut rng = trial_rng(seed, streams::PLACEMENT, trial);
    let placement = sample_placement(byz_prior, n, &mut rng)?;
    let mut rng = trial_rng(seed, streams::REPORTS, trial);
    let reports = generate_reports(&states, &placement, gen_channel, &mut rng)?;
    Ok((states, reports))
}

fn run_single_run(cfg: &ExperimentConfig, p: &SingleRunParams) -> Result<ScenarioOutcome> {
    let setup = DetectionSetup {
        n: p.n,
        m: p.m,
        epsilon: p.epsilon,
        state_prior: p.state_prior,
        byz_prior: p.byz_prior,
    };
    setup.validate()?;
    let metric = cfg.error_metric();
    let trials = cfg.trials();
    let seed = cfg.master_seed();
    let (errors, samples) = match &p.rule {
        RuleParams::Map { p_mal_fc } => {
            let est = estimate_error_probability(
                &setup,
                metric,
                p.p_mal,
                p_mal_fc.unwrap_or(p.p_mal),
                trials,
                seed,
            )
            .map_err(with_capacity_hint)?;
            // Re-derive the integer error count so all rules report the
            // same way.
            let samples = match metric {
                ErrorMetric::PerBit => trials * p.m as u64,
                ErrorMetric::PerSequence => trials,
            };
            ((est.p_e() * samples as f64).round() as u64, samples)
        }
        RuleParams::Mp {
            p_mal_fc,
            alpha_guess,
            iterations,
        } => {
            let rho = match p.state_prior {
                StatePrior::Markov { rho, .. } => rho,
                StatePrior::Iid { p1 } => {
                    if (p1 - 0.5).abs() > 1e-12 {
                        return Err(Error::Unsupported(
                            "the message-passing decoder assumes a fair stationary state \
                             prior; use p1 = 0.5 or a Markov prior"
                                .into(),
                        ));
                    }
                    0.5
                }
            };
            if metric == ErrorMetric::PerSequence {
                return Err(Error::Config {
                    path: "error_metric".into(),
                    msg: "rule = \"mp\" reports per-bit errors only".into(),
                });
            }
            let alpha = alpha_guess
                .ok_or_else(|| Error::param("alpha_guess missing (config not materialized)"))?;
            let mp_setup = MpSetup {
                n: p.n,
                m: p.m,
                epsilon: p.epsilon,
                rho,
                alpha,
                iterations: iterations
                    .ok_or_else(|| Error::param("iterations missing (config not materialized)"))?,
            };
            // The generator uses the configured priors; only the decoder
            // beliefs come from the rule parameters.
            let gen_channel = LocalChannel::new(p.epsilon, p.p_mal)?;
            let mp_cfg = mp_setup.mp_config(p_mal_fc.unwrap_or(p.p_mal));
            mp_cfg.validate()?;
            let errors = (0..trials)
                .into_par_iter()
                .try_fold(
                    || 0u64,
                    |acc, t| {
                        let (states, reports) = draw_trial(
                            seed,
                            t,
                            p.m,
                            p.n,
                            &p.state_prior,
                            &p.byz_prior,
                            &gen_channel,
                        )?;
                        let outcome = mp_decide(&reports, &mp_cfg)?;
                        Ok::<u64, Error>(acc + outcome.decision.hamming_distance(&states)? as u64)
                    },
                )
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            (errors, trials * p.m as u64)
        }
        RuleParams::Majority | RuleParams::KOutOfN { .. } | RuleParams::And | RuleParams::Or => {
            let rule = match p.rule {
                RuleParams::Majority => crate::fusion::VotingRule::Majority,
                RuleParams::KOutOfN { k } => crate::fusion::VotingRule::KOutOfN { k },
                RuleParams::And => crate::fusion::VotingRule::And,
                RuleParams::Or => crate::fusion::VotingRule::Or,
                _ => unreachable!("outer match arm"),
            };
            rule.threshold(p.n)?;
            let gen_channel = LocalChannel::new(p.epsilon, p.p_mal)?;
            let errors = (0..trials)
                .into_par_iter()
                .try_fold(
                    || 0u64,
                    |acc, t| {
                        let (states, reports) = draw_trial(
                            seed,
                            t,
                            p.m,
                            p.n,
                            &p.state_prior,
                            &p.byz_prior,
                            &gen_channel,
                        )?;
                        let mut wrong = 0u64;
                        for j in 0..p.m {
                            let column = reports.column(j);
                            let decided = vote(&rule, &column)?;
                            wrong += u64::from(decided != states.get(j));
                        }
                        let unit = match metric {
                            ErrorMetric::PerBit => wrong,
                            ErrorMetric::PerSequence => u64::from(wrong > 0),
                        };
                        Ok::<u64, Error>(acc + unit)
                    },
                )
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            let samples = match metric {
                ErrorMetric::PerBit => trials * p.m as u64,
                ErrorMetric::PerSequence => trials,
            };
            (errors, samples)
        }
    };
    let p_e = errors as f64 / samples as f64;
    let std_err = (p_e * (1.0 - p_e) / samples as f64).sqrt();
    let table = SeriesTable::new(
        vec![
            "p_mal".into(),
            "p_e".into(),
            "std_err".into(),
            "samples".into(),
        ],
        vec![vec![p.p_mal, p_e, std_err, samples as f64]],
    )?;
    Ok(ScenarioOutcome::series_only("estimate", table))
}

fn run_comparison(cfg: &ExperimentConfig, p: &ComparisonParams) -> Result<ScenarioOutcome> {
    let hard_grid = p
        .hard_grid
        .clone()
        .ok_or_else(|| Error::param("hard_grid missing (config not materialized)"))?;
    let opt_grid = p
        .opt_defender_grid
        .clone()
        .ok_or_else(|| Error::param("opt_defender_grid missing (config not materialized)"))?;
    let p_d = 1.0 - p.epsilon;
    let mut rows = Vec::with_capacity(p.rows.len());
    let mut row_notes = Vec::with_capacity(p.rows.len());
    for (r, &byz_prior) in p.rows.iter().enumerate() {
        // All four defences in a row share one sub-seed, hence identical
        // window draws per (attacker value, trial): the column ordering
        // is measured on common random numbers.
        let seed = sub_seed(cfg.master_seed(), COMPARISON_STREAM, r as u64);
        let value = |payoff: &PayoffMatrix| -> Result<f64> {
            Ok(analyze_equilibrium(payoff)?.value)
        };

        let majority_game = IsolationGame {
            n: p.n,
            m: p.m,
            p_d,
            state_prior: p.state_prior,
            byz_prior,
            scheme: IsolationScheme::Hard,
        };
        // Threshold 0 isolates nobody: plain majority fusion.
        let maj_grid = StrategyGrid::new(p.attacker_grid.clone(), vec![0.0])?;
        let maj = value(&estimate_payoffs(
            &majority_game,
            &maj_grid,
            cfg.trials(),
            seed,
        )?)?;

        let hard = value(&estimate_payoffs(
            &majority_game,
            &StrategyGrid::new(p.attacker_grid.clone(), hard_grid.clone())?,
            cfg.trials(),
            seed,
        )?)?;

        let soft_game = IsolationGame {
            scheme: IsolationScheme::Soft {
                statistic: Default::default(),
                alpha_guess: super::config::mean_byzantine_fraction(&byz_prior, p.n),
                p_mal_guess: 1.0,
                prior0: 0.5,
            },
            ..majority_game.clone()
        };
        let soft = value(&estimate_payoffs(
            &soft_game,
            &StrategyGrid::new(p.attacker_grid.clone(), soft_ladder(p.soft_levels))?,
            cfg.trials(),
            seed,
        )?)?;

        let opt_game = OptimalFusionGame {
            n: p.n,
            m: p.m,
            epsilon: p.epsilon,
            state_prior: p.state_prior,
            byz_prior,
            metric: ErrorMetric::PerBit,
        };
        let opt = value(
            &estimate_payoffs(
                &opt_game,
                &StrategyGrid::new(p.attacker_grid.clone(), opt_grid.clone())?,
                cfg.trials(),
                seed,
            )
            .map_err(with_capacity_hint)?,
        )?;

        rows.push(vec![r as f64, maj, hard, soft, opt]);
        row_notes.push(serde_json::json!({
            "index": r,
            "byz_prior": byz_prior,
            "majority": maj,
            "hard_is": hard,
            "soft_is": soft,
            "opt": opt,
        }));
    }
    let table = SeriesTable::new(
        vec![
            "row".into(),
            "majority".into(),
            "hard_is".into(),
            "soft_is".into(),
            "opt".into(),
        ],
        rows,
    )?;
    let mut outcome = ScenarioOutcome::series_only("comparison", table);
    outcome.notes = serde_json::json!({ "rows": row_notes });
    Ok(outcome)
}
