//! Sum-product message passing: a linear-cost approximation of the jointly
//! optimal rule.
//!
//! The posterior factorizes over a bipartite graph with two variable
//! families — the per-epoch states `s_j` and the per-node statuses `a_i`
//! (Byzantine or honest) — joined by `n * m` observation factors
//! `p(r_ij | s_j, a_i)`, a Markov chain of transition factors
//! `p(s_j | s_{j-1})` along the states (flip probability `rho`; `rho = 0.5`
//! is the i.i.d. case), the initial factor `p(s_1) = 1/2`, and a prior
//! factor `p(a_i)` on each status carrying the contamination belief
//! `alpha`.
//!
//! All variables are binary, so every message is a single number: its
//! normalized mass on the value 0 ([`NormalizedMessage`]). One iteration
//! ([`update_messages_once`]) performs a structured flood — observation
//! factors up to the states, a full forward-backward sweep along the chain,
//! back down through the observation factors to the statuses, and closing
//! status-to-factor replies — at `O(n m)` cost, after which
//! state and status marginals are read off locally. The graph has cycles
//! whenever `m >= 2`, so this is loopy belief propagation: iterate a few
//! times ([`MpConfig::iterations`], default 5) and read the beliefs; for
//! `m = 1` the graph is a tree and two iterations make the marginals exact.
//!
//! Compared with [`crate::optimal::map_decide`]'s `2^m` enumeration, the per
//! iteration cost is linear in both `n` and `m` — this is the rule to use
//! for long observation windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ReportMatrix, StateSequence};

/// Messages are clamped into `[CLAMP, 1 - CLAMP]` after every update so the
/// log-domain products stay finite even with degenerate inputs.
const CLAMP: f64 = 1e-12;

/// A distribution over a binary variable, stored as its mass on value 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedMessage {
    p0: f64,
}

impl NormalizedMessage {
    /// Build from a mass on 0, clamped away from the degenerate endpoints.
    pub fn new(p0: f64) -> Self {
        NormalizedMessage {
            p0: p0.clamp(CLAMP, 1.0 - CLAMP),
        }
    }

    /// The uninformative message.
    pub fn uniform() -> Self {
        NormalizedMessage { p0: 0.5 }
    }

    /// Normalize a pair of non-negative weights `(w0, w1)`. A doubly
    /// vanishing pair degrades to the uniform message.
    pub fn from_weights(w0: f64, w1: f64) -> Self {
        let total = w0 + w1;
        if total <= 0.0 || !total.is_finite() {
            return NormalizedMessage::uniform();
        }
        NormalizedMessage::new(w0 / total)
    }

    /// Normalize from log-weights, robust to large magnitude differences.
    fn from_log_weights(l0: f64, l1: f64) -> Self {
        // p0 = 1 / (1 + exp(l1 - l0))
        NormalizedMessage::new(1.0 / (1.0 + (l1 - l0).exp()))
    }

    /// Mass on value 0.
    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// Mass on value 1.
    pub fn p1(&self) -> f64 {
        1.0 - self.p0
    }
}

/// Message-passing parameters: what the fusion center believes, plus the
/// iteration budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpConfig {
    /// Maximum flooding iterations (default 5 — enough in practice).
    pub iterations: usize,
    /// State-flip probability of the Markov prior (`0.5` = i.i.d. states).
    pub rho: f64,
    /// Believed probability that a node is Byzantine.
    pub alpha: f64,
    /// Local decision error rate.
    pub epsilon: f64,
    /// Believed Byzantine flip probability.
    pub p_mal_fc: f64,
    /// Early-stop threshold on the largest message change per iteration.
    pub convergence_tol: f64,
}

impl MpConfig {
    /// Default iteration budget.
    pub const DEFAULT_ITERATIONS: usize = 5;
    /// Default early-stop tolerance.
    pub const DEFAULT_TOL: f64 = 1e-8;

    /// Standard configuration with the default budget and tolerance.
    pub fn new(rho: f64, alpha: f64, epsilon: f64, p_mal_fc: f64) -> Self {
        MpConfig {
            iterations: Self::DEFAULT_ITERATIONS,
            rho,
            alpha,
            epsilon,
            p_mal_fc,
            convergence_tol: Self::DEFAULT_TOL,
        }
    }

    /// Validate all fields.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("p_mal_fc", self.p_mal_fc),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!(
                    "{name} must be a probability in [0, 1], got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::param(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations must be >= 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::param(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        // Byzantine effective error rate; derived, needs no extra check.
        Ok(())
    }

    /// Effective Byzantine report error rate implied by the beliefs:
    /// `delta = eps (1 - p_mal) + (1 - eps) p_mal`.
    pub fn delta(&self) -> f64 {
        self.epsilon * (1.0 - self.p_mal_fc) + (1.0 - self.epsilon) * self.p_mal_fc
    }
}

/// All message families of the factor graph at one iteration.
///
/// Layout: per-epoch vectors are indexed by `j = 0..m`; per-node vectors by
/// `i = 0..n`; the `n x m` families are row-major (`[i * m + j]`). Statuses
/// are encoded internally with value 0 = Byzantine, so an `omega_u` mass on
/// 0 equals `alpha`; the public outputs translate this into plain
/// "probability of being Byzantine" numbers.
///
/// Boundary conventions that keep every update uniform: `phi_r[0]` holds
/// the initial-state factor `p(s_1 = 0) = 1/2` and is never updated;
/// `phi_l[m-1]` stays uniform because no chain factor exists to the right
/// of the last state; `tau_l[0]` and `tau_r[m-1]` are computed but feed no
/// factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    n: usize,
    m: usize,
    /// State -> left chain factor.
    pub tau_l: Vec<NormalizedMessage>,
    /// State -> right chain factor.
    pub tau_r: Vec<NormalizedMessage>,
    /// Right chain factor -> state (i.e. arriving from the right).
    pub phi_l: Vec<NormalizedMessage>,
    /// Left chain factor -> state (arriving from the left); `phi_r[0]` is
    /// the initial-state factor.
    pub phi_r: Vec<NormalizedMessage>,
    /// Observation factor -> state.
    pub nu_u: Vec<NormalizedMessage>,
    /// State -> observation factor.
    pub nu_d: Vec<NormalizedMessage>,
    /// Status -> observation factor.
    pub lambda_u: Vec<NormalizedMessage>,
    /// Observation factor -> status.
    pub lambda_d: Vec<NormalizedMessage>,
    /// Prior factor -> status (constant: mass `alpha` on "Byzantine").
    pub omega_u: Vec<NormalizedMessage>,
    /// Status -> prior factor (normalized product of the lambda_d row).
    pub omega_d: Vec<NormalizedMessage>,
}

impl MessageState {
    /// Initial schedule: statuses forward their priors
    /// (`lambda_u = omega_u`), the initial-state factor is in place, and
    /// everything else is uninformative.
    pub fn init(n: usize, m: usize, cfg: &MpConfig) -> Result<Self> {
        cfg.validate()?;
        if n == 0 || m == 0 {
            return Err(Error::param("message passing requires n >= 1 and m >= 1"));
        }
        let uniform = NormalizedMessage::uniform();
        let prior = NormalizedMessage::new(cfg.alpha);
        let mut phi_r = vec![uniform; m];
        phi_r[0] = NormalizedMessage::new(0.5); // p(s_1 = 0)
        Ok(MessageState {
            n,
            m,
            tau_l: vec![uniform; m],
            tau_r: vec![uniform; m],
            phi_l: vec![uniform; m],
            phi_r,
            nu_u: vec![uniform; n * m],
            nu_d: vec![uniform; n * m],
            lambda_u: vec![prior; n * m],
            lambda_d: vec![uniform; n * m],
            omega_u: vec![prior; n],
            omega_d: vec![uniform; n],
        })
    }

    /// Network size `(n, m)` the state was built for.
    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// Largest absolute difference across all message families.
    pub fn max_delta(&self, other: &MessageState) -> f64 {
        let pairs = [
            (&self.tau_l, &other.tau_l),
            (&self.tau_r, &other.tau_r),
            (&self.phi_l, &other.phi_l),
            (&self.phi_r, &other.phi_r),
            (&self.nu_u, &other.nu_u),
            (&self.nu_d, &other.nu_d),
            (&self.lambda_u, &other.lambda_u),
            (&self.lambda_d, &other.lambda_d),
            (&self.omega_u, &other.omega_u),
            (&self.omega_d, &other.omega_d),
        ];
        pairs
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(x, y)| (x.p0() - y.p0()).abs())
            .fold(0.0, f64::max)
    }
}

/// Observation-factor likelihood `p(r | s, byzantine?)`.
#[inline]
fn obs_likelihood(r: bool, s: bool, byz: bool, eps: f64, delta: f64) -> f64 {
    let err = if byz { delta } else { eps };
    if r == s {
        1.0 - err
    } else {
        err
    }
}

/// Symmetric chain factor: mass on `s_j = 0` given the neighbor's message.
#[inline]
fn chain_step(rho: f64, neighbor: NormalizedMessage) -> NormalizedMessage {
    // P(0) = P(stay) * m(0) + P(flip) * m(1)
    NormalizedMessage::new((1.0 - rho) * neighbor.p0() + rho * neighbor.p1())
}

/// One structured flooding iteration; returns the new state and the largest
/// message change. Pure function of `(state, reports, cfg)`.
pub fn update_messages_once(
    state: &MessageState,
    reports: &ReportMatrix,
    cfg: &MpConfig,
) -> Result<(MessageState, f64)> {
    cfg.validate()?;
    let (n, m) = state.shape();
    if reports.n() != n || reports.m() != m {
        return Err(Error::mismatch(format!(
            "message state is {n} x {m} but reports are {} x {}",
            reports.n(),
            reports.m()
        )));
    }
    let eps = cfg.epsilon;
    let delta = cfg.delta();
    let mut next = state.clone();

    // 1. Observation factors up to the states, from the previous
    //    iteration's status replies.
    for i in 0..n {
        for j in 0..m {
            let r = reports.get(i, j);
            let lu = state.lambda_u[i * m + j];
            let w0 = obs_likelihood(r, false, true, eps, delta) * lu.p0()
                + obs_likelihood(r, false, false, eps, delta) * lu.p1();
            let w1 = obs_likelihood(r, true, true, eps, delta) * lu.p0()
                + obs_likelihood(r, true, false, eps, delta) * lu.p1();
            next.nu_u[i * m + j] = NormalizedMessage::from_weights(w0, w1);
        }
    }

    // Per-epoch log-sums of the fresh upward messages; the "all nodes but
    // one" products divide one factor out in the log domain.
    let mut sum_ln0 = vec![0.0; m];
    let mut sum_ln1 = vec![0.0; m];
    for j in 0..m {
        for i in 0..n {
            let nu = next.nu_u[i * m + j];
            sum_ln0[j] += nu.p0().ln();
            sum_ln1[j] += nu.p1().ln();
        }
    }

    // 2. Forward sweep: tau_r rides left-to-right, refreshing phi_r.
    for j in 0..m {
        if j > 0 {
            next.phi_r[j] = chain_step(cfg.rho, next.tau_r[j - 1]);
        }
        let pr = next.phi_r[j];
        next.tau_r[j] = NormalizedMessage::from_log_weights(
            pr.p0().ln() + sum_ln0[j],
            pr.p1().ln() + sum_ln1[j],
        );
    }

    // 3. Backward sweep: tau_l rides right-to-left, refreshing phi_l.
    for j in (0..m).rev() {
        if j + 1 < m {
            next.phi_l[j] = chain_step(cfg.rho, next.tau_l[j + 1]);
        }
        let pl = next.phi_l[j];
        next.tau_l[j] = NormalizedMessage::from_log_weights(
            pl.p0().ln() + sum_ln0[j],
            pl.p1().ln() + sum_ln1[j],
        );
    }

    // 4. States back down to each observation factor (exclude the
    //    recipient's own upward message), then the factors down to the
    //    statuses.
    for i in 0..n {
        for j in 0..m {
            let nu = next.nu_u[i * m + j];
            let l0 = next.phi_r[j].p0().ln() + next.phi_l[j].p0().ln() + sum_ln0[j]
                - nu.p0().ln();
            let l1 = next.phi_r[j].p1().ln() + next.phi_l[j].p1().ln() + sum_ln1[j]
                - nu.p1().ln();
            let nd = NormalizedMessage::from_log_weights(l0, l1);
            next.nu_d[i * m + j] = nd;

            let r = reports.get(i, j);
            // lambda_d over the status value: component 0 = Byzantine.
            let w_byz = obs_likelihood(r, false, true, eps, delta) * nd.p0()
                + obs_likelihood(r, true, true, eps, delta) * nd.p1();
            let w_hon = obs_likelihood(r, false, false, eps, delta) * nd.p0()
                + obs_likelihood(r, true, false, eps, delta) * nd.p1();
            next.lambda_d[i * m + j] = NormalizedMessage::from_weights(w_byz, w_hon);
        }
    }

    // 5. Status replies: prior times all-but-one product of the fresh
    //    lambda_d row; plus the full-row product for the posterior readout.
    for i in 0..n {
        let mut row_ln0 = 0.0;
        let mut row_ln1 = 0.0;
        for j in 0..m {
            let ld = next.lambda_d[i * m + j];
            row_ln0 += ld.p0().ln();
            row_ln1 += ld.p1().ln();
        }
        let prior = next.omega_u[i];
        for j in 0..m {
            let ld = next.lambda_d[i * m + j];
            next.lambda_u[i * m + j] = NormalizedMessage::from_log_weights(
                prior.p0().ln() + row_ln0 - ld.p0().ln(),
                prior.p1().ln() + row_ln1 - ld.p1().ln(),
            );
        }
        next.omega_d[i] = NormalizedMessage::from_log_weights(row_ln0, row_ln1);
    }

    let delta_max = next.max_delta(state);
    Ok((next, delta_max))
}

/// Result of a message-passing decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpOutcome {
    /// Per-epoch decisions (marginal maximizers; an exact tie decides 0).
    pub decision: StateSequence,
    /// Posterior beliefs `P(s_j = 1 | reports)` per epoch.
    pub state_marginals: Vec<f64>,
    /// Posterior beliefs that each node is Byzantine.
    pub byz_posteriors: Vec<f64>,
    /// Whether the message updates fell below `convergence_tol` within the
    /// iteration budget.
    pub converged: bool,
    /// Iterations actually performed.
    pub iterations_used: usize,
}

/// Run loopy sum-product to the iteration budget (or convergence) and read
/// out decisions and beliefs.
pub fn mp_decide(reports: &ReportMatrix, cfg: &MpConfig) -> Result<MpOutcome> {
    let mut state = MessageState::init(reports.n(), reports.m(), cfg)?;
    let mut converged = false;
    let mut iterations_used = 0;
    for _ in 0..cfg.iterations {
        let (next, delta) = update_messages_once(&state, reports, cfg)?;
        state = next;
        iterations_used += 1;
        if delta < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    let (n, m) = state.shape();
    // State beliefs: all incoming messages at each state variable.
    let mut state_marginals = Vec::with_capacity(m);
    let mut bits = Vec::with_capacity(m);
    for j in 0..m {
        let mut l0 = state.phi_r[j].p0().ln() + state.phi_l[j].p0().ln();
        let mut l1 = state.phi_r[j].p1().ln() + state.phi_l[j].p1().ln();
        for i in 0..n {
            let nu = state.nu_u[i * m + j];
            l0 += nu.p0().ln();
            l1 += nu.p1().ln();
        }
        let belief1 = 1.0 / (1.0 + (l0 - l1).exp());
        state_marginals.push(belief1);
        bits.push(belief1 > 0.5);
    }
    // Status beliefs: prior times the normalized lambda_d product.
    let byz_posteriors = (0..n)
        .map(|i| {
            let prior = state.omega_u[i];
            let prod = state.omega_d[i];
            let w_byz = prior.p0() * prod.p0();
            let w_hon = prior.p1() * prod.p1();
            w_byz / (w_byz + w_hon)
        })
        .collect();
    Ok(MpOutcome {
        decision: StateSequence::new(bits)?,
        state_marginals,
        byz_posteriors,
        converged,
        iterations_used,
    })
}
