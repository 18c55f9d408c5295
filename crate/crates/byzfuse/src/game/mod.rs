//! Strategic-game layer over the fusion simulators.
//!
//! The attacker (row player) and the defender (column player) each commit
//! to one value from a quantized strategy grid; the payoff of a profile is
//! the fusion error probability, which the attacker maximizes and the
//! defender minimizes — a two-player zero-sum game. This module provides:
//!
//! - [`estimate_payoffs`] — Monte-Carlo estimation of the payoff matrix
//!   for any [`PayoffScenario`], with common random numbers across all
//!   cells of a row (the same trial sub-seeds are reused for every
//!   defender column, and the same state/placement draws for every
//!   attacker row) and thread-count-independent results;
//! - [`find_pure_nash`] — saddle points (pure equilibria);
//! - [`eliminate_dominated`] — iterated elimination of strictly dominated
//!   strategies, with a `2σ` noise margin on estimated matrices;
//! - [`solve_zero_sum`] — mixed equilibria by linear programming, solving
//!   both players' LPs and cross-checking the minimax identity;
//! - [`analyze_equilibrium`] — the cascade a report wants: dominance,
//!   then saddle, then mixed.
//!
//! Payoff matrices serialize to CSV (attacker rows, defender columns,
//! header row and column naming the strategies) with a JSON metadata
//! sidecar carrying the scenario descriptor, grids, trial count, and seed.

mod scenarios;
mod simplex;

pub use scenarios::{
    CddGame, IsolationGame, IsolationScheme, OptimalFusionGame, RocPoint, SoftStatistic,
};

use std::io::{Read, Write};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantized strategy sets for the two players.
///
/// Entries are the strategy *values* (flip probabilities, thresholds, …);
/// each side must be nonempty and strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyGrid {
    attacker: Vec<f64>,
    defender: Vec<f64>,
}

fn check_strictly_increasing(side: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::param(format!("{side} strategy grid is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(format!(
            "{side} strategy grid contains a non-finite value"
        )));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param(format!(
            "{side} strategy grid must be strictly increasing, got {values:?}"
        )));
    }
    Ok(())
}

impl StrategyGrid {
    /// Build a grid from explicit strategy values for each player.
    pub fn new(attacker: Vec<f64>, defender: Vec<f64>) -> Result<Self> {
        check_strictly_increasing("attacker", &attacker)?;
        check_strictly_increasing("defender", &defender)?;
        Ok(StrategyGrid { attacker, defender })
    }

    /// The default flip-probability grid `{0.5, 0.6, …, 1.0}` on both sides.
    pub fn default_p_mal() -> Self {
        let values: Vec<f64> = (5..=10).map(|k| k as f64 / 10.0).collect();
        StrategyGrid {
            attacker: values.clone(),
            defender: values,
        }
    }

    /// Attacker strategy values (rows of the payoff matrix).
    pub fn attacker(&self) -> &[f64] {
        &self.attacker
    }

    /// Defender strategy values (columns of the payoff matrix).
    pub fn defender(&self) -> &[f64] {
        &self.defender
    }
}

/// Metadata identifying how a payoff matrix was produced; serialized as a
/// JSON sidecar next to the CSV payoff file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMetadata {
    /// Scenario descriptor (model parameters in human-readable form).
    pub scenario: String,
    /// Attacker strategy values, one per matrix row.
    pub attacker: Vec<f64>,
    /// Defender strategy values, one per matrix column.
    pub defender: Vec<f64>,
    /// Monte-Carlo trials per cell (0 for exact, hand-entered matrices).
    pub trials: u64,
    /// Error-counting units per cell (`trials × units per trial`); the
    /// binomial sample size behind each entry. 0 means exact.
    pub samples_per_cell: u64,
    /// Master seed of the estimation run.
    pub seed: u64,
}

impl PayoffMetadata {
    /// Serialize to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    /// Parse from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            path: "<payoff metadata>".into(),
            msg: e.to_string(),
        })
    }
}

/// Estimated (or exactly known) payoff matrix of a zero-sum game.
///
/// `values[[a, d]]` is the error probability when the attacker plays
/// `attacker[a]` and the defender plays `defender[d]`. For Monte-Carlo
/// matrices every cell of row `a` was computed from the same sub-seeded
/// trials, so columns are coupled by common random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    attacker: Vec<f64>,
    defender: Vec<f64>,
    values: Array2<f64>,
    trials: u64,
    samples_per_cell: u64,
    seed: u64,
    scenario: String,
}

impl PayoffMatrix {
    /// Wrap exactly known payoffs (no Monte-Carlo noise), e.g. a published
    /// table or an analytic game. Rows are attacker strategies.
    pub fn exact(attacker: Vec<f64>, defender: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        check_strictly_increasing("attacker", &attacker)?;
        check_strictly_increasing("defender", &defender)?;
        if rows.len() != attacker.len() {
            return Err(Error::mismatch(format!(
                "{} payoff rows for {} attacker strategies",
                rows.len(),
                attacker.len()
            )));
        }
        let mut values = Array2::zeros((attacker.len(), defender.len()));
        for (a, row) in rows.iter().enumerate() {
            if row.len() != defender.len() {
                return Err(Error::mismatch(format!(
                    "payoff row {a} has {} entries for {} defender strategies",
                    row.len(),
                    defender.len()
                )));
            }
            for (d, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::param(format!("payoff ({a},{d}) is not finite")));
                }
                values[[a, d]] = x;
            }
        }
        Ok(PayoffMatrix {
            attacker,
            defender,
            values,
            trials: 0,
            samples_per_cell: 0,
            seed: 0,
            scenario: "exact".into(),
        })
    }

    /// Number of (attacker, defender) strategies.
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Payoff entries; rows are attacker strategies.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Single payoff entry.
    pub fn get(&self, attacker: usize, defender: usize) -> f64 {
        self.values[[attacker, defender]]
    }

    /// Attacker strategy values (row labels).
    pub fn attacker(&self) -> &[f64] {
        &self.attacker
    }

    /// Defender strategy values (column labels).
    pub fn defender(&self) -> &[f64] {
        &self.defender
    }

    /// Monte-Carlo trials per cell (0 for exact matrices).
    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Binomial sample size behind each cell (0 for exact matrices).
    pub fn samples_per_cell(&self) -> u64 {
        self.samples_per_cell
    }

    /// Master seed of the estimation run.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Scenario descriptor.
    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    /// Binomial standard error of one cell; 0 for exact matrices.
    pub fn std_err(&self, attacker: usize, defender: usize) -> f64 {
        if self.samples_per_cell == 0 {
            return 0.0;
        }
        let p = self.values[[attacker, defender]].clamp(0.0, 1.0);
        (p * (1.0 - p) / self.samples_per_cell as f64).sqrt()
    }

    /// Metadata sidecar for this matrix.
    pub fn metadata(&self) -> PayoffMetadata {
        PayoffMetadata {
            scenario: self.scenario.clone(),
            attacker: self.attacker.clone(),
            defender: self.defender.clone(),
            trials: self.trials,
            samples_per_cell: self.samples_per_cell,
            seed: self.seed,
        }
    }

    /// Restore sidecar metadata onto a matrix read back from CSV. The
    /// sidecar must agree with the CSV on both strategy grids.
    pub fn apply_metadata(&mut self, meta: &PayoffMetadata) -> Result<()> {
        if meta.attacker != self.attacker || meta.defender != self.defender {
            return Err(Error::mismatch(
                "metadata sidecar grids do not match the CSV payoff grids",
            ));
        }
        self.trials = meta.trials;
        self.samples_per_cell = meta.samples_per_cell;
        self.seed = meta.seed;
        self.scenario = meta.scenario.clone();
        Ok(())
    }

    /// Write the matrix as CSV: a header row naming the defender
    /// strategies, then one row per attacker strategy. Numbers use the
    /// shortest representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["attacker\\defender".to_string()];
        header.extend(self.defender.iter().map(|x| x.to_string()));
        w.write_record(&header).map_err(csv_io)?;
        for (a, &att) in self.attacker.iter().enumerate() {
            let mut record = vec![att.to_string()];
            record.extend((0..self.defender.len()).map(|d| self.values[[a, d]].to_string()));
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// The CSV serialization as a string.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Numerical(e.to_string()))
    }

    /// Read a matrix written by [`PayoffMatrix::write_csv`]. The result
    /// carries exact-mode metadata until [`PayoffMatrix::apply_metadata`]
    /// restores the sidecar.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::mismatch("payoff CSV is empty"))?
            .map_err(csv_io)?;
        let defender: Vec<f64> = header
            .iter()
            .skip(1)
            .map(parse_cell)
            .collect::<Result<_>>()?;
        let mut attacker = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in records {
            let record = record.map_err(csv_io)?;
            let mut fields = record.iter();
            let label = fields
                .next()
                .ok_or_else(|| Error::mismatch("payoff CSV row has no label"))?;
            attacker.push(parse_cell(label)?);
            rows.push(fields.map(parse_cell).collect::<Result<_>>()?);
        }
        PayoffMatrix::exact(attacker, defender, rows)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Config {
        path: "<payoff csv>".into(),
        msg: e.to_string(),
    }
}

fn parse_cell(text: &str) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| Error::Config {
        path: "<payoff csv>".into(),
        msg: format!("cannot parse {text:?} as a number"),
    })
}

/// One fusion scenario whose error probability defines the game payoff.
///
/// Implementations interpret the grid values (the attacker's value is a
/// flip probability in every bundled scenario; the defender's meaning is
/// scenario-specific) and count decision errors per trial. A trial must be
/// a pure function of `(seed, trial, attacker, defenders)` so estimates
/// are reproducible and independent of scheduling.
pub trait PayoffScenario: Sync {
    /// Human-readable descriptor recorded in the metadata sidecar.
    fn name(&self) -> String;

    /// Error-counting units one trial contributes per cell: the window
    /// length for per-bit error rates, 1 for per-sequence.
    fn units_per_trial(&self) -> u64;

    /// Check the grid values are meaningful for this scenario.
    fn validate_grid(&self, grid: &StrategyGrid) -> Result<()>;

    /// Run one trial under `attacker` and **add** the error counts for
    /// every defender strategy into `errors` (one slot per defender).
    ///
    /// The same `(seed, trial)` pair must reproduce the same underlying
    /// state and placement draws for every attacker value, so that rows
    /// are coupled by common random numbers.
    fn accumulate_trial(
        &self,
        attacker: f64,
        defenders: &[f64],
        seed: u64,
        trial: u64,
        errors: &mut [u64],
    ) -> Result<()>;
}

/// Estimate the payoff matrix of `scenario` over `grid` by Monte Carlo.
///
/// For each attacker row, all defender columns are evaluated inside the
/// same trial on the same draws (common random numbers), and trials are
/// sub-seeded from `(seed, trial)`, making the estimate bit-for-bit
/// independent of the worker count. Error totals are exact integers.
pub fn estimate_payoffs<S: PayoffScenario + ?Sized>(
    scenario: &S,
    grid: &StrategyGrid,
    trials: u64,
    seed: u64,
) -> Result<PayoffMatrix> {
    if trials == 0 {
        return Err(Error::param("payoff estimation needs at least one trial"));
    }
    scenario.validate_grid(grid)?;
    let n_a = grid.attacker().len();
    let n_d = grid.defender().len();
    let units = scenario.units_per_trial();
    let samples = trials
        .checked_mul(units)
        .ok_or_else(|| Error::param("trials x units-per-trial overflows u64"))?;

    let mut values = Array2::zeros((n_a, n_d));
    for (a, &attacker) in grid.attacker().iter().enumerate() {
        // Run the first trial serially so parameter errors surface as
        // errors rather than panics from the worker pool.
        let mut probe = vec![0u64; n_d];
        scenario.accumulate_trial(attacker, grid.defender(), seed, 0, &mut probe)?;

        let counts = (0..trials)
            .into_par_iter()
            .fold(
                || vec![0u64; n_d],
                |mut acc, trial| {
                    scenario
                        .accumulate_trial(attacker, grid.defender(), seed, trial, &mut acc)
                        .expect("parameters validated by the serial probe trial");
                    acc
                },
            )
            .reduce(
                || vec![0u64; n_d],
                |mut left, right| {
                    for (l, r) in left.iter_mut().zip(right) {
                        *l += r;
                    }
                    left
                },
            );
        for (d, &errors) in counts.iter().enumerate() {
            values[[a, d]] = errors as f64 / samples as f64;
        }
    }
    Ok(PayoffMatrix {
        attacker: grid.attacker().to_vec(),
        defender: grid.defender().to_vec(),
        values,
        trials,
        samples_per_cell: samples,
        seed,
        scenario: scenario.name(),
    })
}

/// How an equilibrium was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    /// Iterated elimination of strictly dominated strategies left a single
    /// profile: the unique rationalizable outcome.
    PureDominant,
    /// A saddle point: simultaneously a row maximum and a column minimum.
    PureNash,
    /// Mixed equilibrium from the minimax linear programs.
    Mixed,
}

/// A zero-sum equilibrium: one probability vector per player over the
/// strategy-grid indices, plus the game value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// How the equilibrium was found.
    pub kind: EquilibriumKind,
    /// Attacker mixture over the matrix rows; sums to 1 within 1e−9.
    pub attacker_strategy: Vec<f64>,
    /// Defender mixture over the matrix columns; sums to 1 within 1e−9.
    pub defender_strategy: Vec<f64>,
    /// Expected payoff at the equilibrium (unique even when the optimal
    /// mixtures are not).
    pub value: f64,
}

impl Equilibrium {
    /// Row indices carrying attacker probability mass above `1e-9`.
    pub fn attacker_support(&self) -> Vec<usize> {
        support(&self.attacker_strategy)
    }

    /// Column indices carrying defender probability mass above `1e-9`.
    pub fn defender_support(&self) -> Vec<usize> {
        support(&self.defender_strategy)
    }
}

fn support(weights: &[f64]) -> Vec<usize> {
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 1e-9)
        .map(|(i, _)| i)
        .collect()
}

fn indicator(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// All pure saddle points of the matrix: cells that are simultaneously a
/// maximum of their column (the attacker cannot improve) and a minimum of
/// their row (the defender cannot improve). Comparisons are exact.
pub fn find_pure_nash(matrix: &PayoffMatrix) -> Vec<(usize, usize)> {
    let (n_a, n_d) = matrix.shape();
    let v = matrix.values();
    let mut saddles = Vec::new();
    for a in 0..n_a {
        for d in 0..n_d {
            let x = v[[a, d]];
            let row_min = (0..n_d).all(|d2| x <= v[[a, d2]]);
            let col_max = (0..n_a).all(|a2| x >= v[[a2, d]]);
            if row_min && col_max {
                saddles.push((a, d));
            }
        }
    }
    saddles
}

/// Iterated elimination of strictly dominated strategies.
///
/// Attacker rows are removed when some other surviving row is strictly
/// larger in every surviving column; defender columns when some other
/// column is strictly smaller in every surviving row. On Monte-Carlo
/// matrices each comparison must clear a `2σ` margin (σ of the difference
/// of two independent binomial estimates) so noise cannot manufacture
/// dominance; exact matrices use plain strict inequality. Returns the
/// reduced matrix plus the surviving row and column indices.
pub fn eliminate_dominated(matrix: &PayoffMatrix) -> (PayoffMatrix, Vec<usize>, Vec<usize>) {
    let (n_a, n_d) = matrix.shape();
    let v = matrix.values();
    let margin = |a1: usize, d1: usize, a2: usize, d2: usize| -> f64 {
        let s1 = matrix.std_err(a1, d1);
        let s2 = matrix.std_err(a2, d2);
        2.0 * (s1 * s1 + s2 * s2).sqrt()
    };
    let mut rows: Vec<usize> = (0..n_a).collect();
    let mut cols: Vec<usize> = (0..n_d).collect();
    loop {
        // Attacker rows: maximizer, dominated means strictly smaller.
        let dominated_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| {
                rows.iter().any(|&other| {
                    other != r
                        && cols
                            .iter()
                            .all(|&d| v[[other, d]] > v[[r, d]] + margin(other, d, r, d))
                })
            })
            .collect();
        rows.retain(|r| !dominated_rows.contains(r));

        // Defender columns: minimizer, dominated means strictly larger.
        let dominated_cols: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&c| {
                cols.iter().any(|&other| {
                    other != c
                        && rows
                            .iter()
                            .all(|&a| v[[a, other]] < v[[a, c]] - margin(a, other, a, c))
                })
            })
            .collect();
        cols.retain(|c| !dominated_cols.contains(c));

        if dominated_rows.is_empty() && dominated_cols.is_empty() {
            break;
        }
    }
    let mut reduced = Array2::zeros((rows.len(), cols.len()));
    for (ri, &r) in rows.iter().enumerate() {
        for (ci, &c) in cols.iter().enumerate() {
            reduced[[ri, ci]] = v[[r, c]];
        }
    }
    let reduced = PayoffMatrix {
        attacker: rows.iter().map(|&r| matrix.attacker[r]).collect(),
        defender: cols.iter().map(|&c| matrix.defender[c]).collect(),
        values: reduced,
        trials: matrix.trials,
        samples_per_cell: matrix.samples_per_cell,
        seed: matrix.seed,
        scenario: matrix.scenario.clone(),
    };
    (reduced, rows, cols)
}

/// Maximum absolute disagreement tolerated between the two players' LP
/// optima (the minimax identity).
const MINIMAX_TOL: f64 = 1e-7;
/// Slack allowed when re-verifying the returned equilibrium directly
/// against the matrix.
const CERTIFICATE_TOL: f64 = 1e-6;

/// Solve the zero-sum game exactly by linear programming.
///
/// Both players' LPs are solved independently (the attacker's problem is
/// the defender's problem of the negated transpose); their optima must
/// agree within `1e-7`, and the returned profile is re-verified against
/// the matrix: the attacker mixture guarantees at least `value − 1e−6`
/// against every column, the defender mixture concedes at most
/// `value + 1e−6` against every row. Degenerate games may admit several
/// optimal mixtures; the solver's vertex solution is returned and the
/// value — which is unique — is the average of the two LP optima.
pub fn solve_zero_sum(matrix: &PayoffMatrix) -> Result<Equilibrium> {
    let v = matrix.values();
    let (n_a, n_d) = v.dim();
    let (defender, value_minmax) = simplex::defender_optimum(v.view())?;
    let negated_transpose = Array2::from_shape_fn((n_d, n_a), |(d, a)| -v[[a, d]]);
    let (attacker, neg_value_maxmin) = simplex::defender_optimum(negated_transpose.view())?;
    let value_maxmin = -neg_value_maxmin;
    if (value_minmax - value_maxmin).abs() > MINIMAX_TOL {
        return Err(Error::Numerical(format!(
            "minimax identity violated: min-max {value_minmax} vs max-min {value_maxmin}"
        )));
    }
    let value = 0.5 * (value_minmax + value_maxmin);

    for d in 0..n_d {
        let yield_d: f64 = (0..n_a).map(|a| attacker[a] * v[[a, d]]).sum();
        if yield_d < value - CERTIFICATE_TOL {
            return Err(Error::Numerical(format!(
                "attacker certificate failed on column {d}: {yield_d} < {value}"
            )));
        }
    }
    for a in 0..n_a {
        let concede_a: f64 = (0..n_d).map(|d| defender[d] * v[[a, d]]).sum();
        if concede_a > value + CERTIFICATE_TOL {
            return Err(Error::Numerical(format!(
                "defender certificate failed on row {a}: {concede_a} > {value}"
            )));
        }
    }
    Ok(Equilibrium {
        kind: EquilibriumKind::Mixed,
        attacker_strategy: attacker,
        defender_strategy: defender,
        value,
    })
}

/// Full equilibrium cascade: report the strongest solution concept that
/// applies — a unique rationalizable profile from iterated dominance, else
/// a saddle point, else the mixed LP equilibrium.
pub fn analyze_equilibrium(matrix: &PayoffMatrix) -> Result<Equilibrium> {
    let (n_a, n_d) = matrix.shape();
    let (reduced, rows, cols) = eliminate_dominated(matrix);
    if reduced.shape() == (1, 1) {
        return Ok(Equilibrium {
            kind: EquilibriumKind::PureDominant,
            attacker_strategy: indicator(n_a, rows[0]),
            defender_strategy: indicator(n_d, cols[0]),
            value: reduced.get(0, 0),
        });
    }
    if let Some(&(a, d)) = find_pure_nash(matrix).first() {
        return Ok(Equilibrium {
            kind: EquilibriumKind::PureNash,
            attacker_strategy: indicator(n_a, a),
            defender_strategy: indicator(n_d, d),
            value: matrix.get(a, d),
        });
    }
    solve_zero_sum(matrix)
}
