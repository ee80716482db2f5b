//! Closed-form convergence bounds for compressed federated Q-learning and the
//! payload bit model.
//!
//! The bound evaluators transcribe the displayed right-hand sides term by term,
//! logarithmic arguments included. `reward_scale` generalizes the unit reward
//! range: with rewards bounded by `r_max` and `||Q_0|| <= r_max / (1 - gamma)`
//! every residual term scales linearly in `r_max` while the contraction term
//! keeps the measured initial gap.

use crate::compression::{contraction_alpha, CompressorKind};
use crate::error::{Error, Result};

fn out_of_range(msg: String) -> Error {
    Error::ParamOutOfRange(msg)
}

fn check_unit_open_closed(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(out_of_range(format!("{name} must lie in (0, 1], got {x}")));
    }
    Ok(())
}

/// Per-round contraction factor `1 - beta + beta (1 - eta)^K`.
pub fn rho(beta: f64, eta: f64, k: usize) -> Result<f64> {
    check_unit_open_closed("beta", beta)?;
    check_unit_open_closed("eta", eta)?;
    if k == 0 {
        return Err(out_of_range("K must be at least 1".into()));
    }
    Ok(1.0 - beta + beta * (1.0 - eta).powi(k as i32))
}

/// Inputs of the two convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Local epochs `K`.
    pub local_epochs: usize,
    /// Communication rounds `T`.
    pub rounds: usize,
    /// Number of agents `I`.
    pub agents: usize,
    /// Failure probability.
    pub delta: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub q2: f64,
    pub q_inf: f64,
    pub alpha: f64,
    /// `||Q_0 - Q*||_inf`.
    pub q0_gap: f64,
    /// Reward bound `r_max`; 1 reproduces the unit-range statements.
    pub reward_scale: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        check_unit_open_closed("beta", self.beta)?;
        check_unit_open_closed("eta", self.eta)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(out_of_range(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(out_of_range(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.local_epochs == 0 || self.rounds == 0 || self.agents == 0 {
            return Err(out_of_range("K, T and I must be at least 1".into()));
        }
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(out_of_range(
                "state and action counts must be at least 1".into(),
            ));
        }
        if !(self.q2 >= 0.0 && self.q_inf >= 0.0) {
            return Err(out_of_range("q2 and q_inf must be non-negative".into()));
        }
        if !(self.q0_gap >= 0.0) || !(self.reward_scale > 0.0) {
            return Err(out_of_range(
                "q0_gap must be >= 0 and reward_scale > 0".into(),
            ));
        }
        Ok(())
    }

    fn decay(&self) -> f64 {
        (1.0 - self.eta).powi(self.local_epochs as i32)
    }

    /// `C = (1 - gamma)(1 - (1 - eta)^K)`.
    pub fn c_const(&self) -> f64 {
        (1.0 - self.gamma) * (1.0 - self.decay())
    }

    /// `D = 1 + (1 + (1 - eta)^K) / (1 - (1 - eta)^K)`.
    pub fn d_const(&self) -> f64 {
        let x = self.decay();
        1.0 + (1.0 + x) / (1.0 - x)
    }

    fn sa_tk(&self) -> f64 {
        (self.n_states * self.n_actions) as f64 * self.rounds as f64 * self.local_epochs as f64
    }
}

/// Term-by-term value of a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// `rho^T ||Q_0 - Q*||`.
    pub contraction: f64,
    /// Statistical error shrinking with the number of agents.
    pub sampling: f64,
    /// `2 gamma / C`.
    pub bias: f64,
    /// Compression residual.
    pub compression: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.contraction + self.sampling + self.bias + self.compression
    }
}

/// Direct (unbiased) compression bound, split into terms.
pub fn theorem1_terms(p: &BoundParams) -> Result<BoundTerms> {
    p.validate()?;
    let rho = rho(p.beta, p.eta, p.local_epochs)?;
    let c = p.c_const();
    let i = p.agents as f64;
    let log_sa = (4.0 * p.sa_tk() / p.delta).ln();
    let log_t = (4.0 * p.rounds as f64 / p.delta).ln();
    let sa = (p.n_states * p.n_actions) as f64;
    let one_minus_g = 1.0 - p.gamma;

    let e1 = 4.0 * p.gamma / c * log_sa.sqrt() * (1.0 + log_sa.sqrt() / (p.eta * i).sqrt());
    let e2 = 1.0 / (1.0 - p.decay())
        * ((16.0 * 4.0 * p.q2 * sa / (one_minus_g * one_minus_g) * log_t).sqrt()
            + 4.0 / 3.0 * (2.0 * p.q_inf * i.sqrt() / one_minus_g) * log_t);

    Ok(BoundTerms {
        contraction: rho.powi(p.rounds as i32) * p.q0_gap,
        sampling: p.reward_scale * (p.eta / i).sqrt() * e1,
        bias: p.reward_scale * 2.0 * p.gamma / c,
        compression: p.reward_scale * e2 / i.sqrt(),
    })
}

/// Error-feedback (biased) compression bound, split into terms.
pub fn theorem2_terms(p: &BoundParams) -> Result<BoundTerms> {
    p.validate()?;
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(out_of_range(format!(
            "alpha must lie in (0, 1], got {}",
            p.alpha
        )));
    }
    let rho = rho(p.beta, p.eta, p.local_epochs)?;
    let c = p.c_const();
    let i = p.agents as f64;
    let log_sa = (2.0 * p.sa_tk() / p.delta).ln();
    let e1 = 1.0 + log_sa.sqrt() / (p.eta * i).sqrt();

    Ok(BoundTerms {
        contraction: rho.powi(p.rounds as i32) * p.q0_gap,
        sampling: p.reward_scale * 4.0 / c * (p.eta / i * log_sa).sqrt() * e1,
        bias: p.reward_scale * 2.0 * p.gamma / c,
        compression: p.reward_scale * 2.0 * p.beta * (1.0 - p.alpha) / (p.alpha * (1.0 - p.gamma))
            * p.d_const(),
    })
}

/// High-probability bound on `||Q_T - Q*||_inf` for direct unbiased compression.
pub fn theorem1_bound(p: &BoundParams) -> Result<f64> {
    theorem1_terms(p).map(|t| t.total())
}

/// High-probability bound on `||Q_T - Q*||_inf` with error feedback.
pub fn theorem2_bound(p: &BoundParams) -> Result<f64> {
    theorem2_terms(p).map(|t| t.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Direct uploads with an unbiased compressor.
    Unbiased,
    /// Error-feedback uploads with a contractive compressor.
    ErrorFeedback,
}

pub fn bound_terms(p: &BoundParams, kind: BoundKind) -> Result<BoundTerms> {
    match kind {
        BoundKind::Unbiased => theorem1_terms(p),
        BoundKind::ErrorFeedback => theorem2_terms(p),
    }
}

/// Bound evaluated at every intermediate round `t` of a `p.rounds`-round run:
/// residual terms use the run horizon `T`, the contraction term uses `rho^t`.
pub fn bound_curve(p: &BoundParams, kind: BoundKind, rounds: &[usize]) -> Result<Vec<f64>> {
    let terms = bound_terms(p, kind)?;
    let residual = terms.sampling + terms.bias + terms.compression;
    let rho = rho(p.beta, p.eta, p.local_epochs)?;
    Ok(rounds
        .iter()
        .map(|&t| rho.powi(t as i32) * p.q0_gap + residual)
        .collect())
}

/// Bits per transmitted value and per index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitModel {
    pub fpp: u32,
    pub index_bits: u32,
}

impl BitModel {
    /// `index_bits = ceil(log2 d)`.
    pub fn new(dim: usize, fpp: u32) -> Self {
        assert!(fpp >= 1, "fpp must be at least 1");
        Self {
            fpp,
            index_bits: ceil_log2(dim),
        }
    }
}

/// `ceil(log2 n)` for `n >= 1`; 0 for `n <= 1`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Uplink bits of one payload: dense `d * fpp` for the identity, otherwise
/// `entries * (ceil(log2 d) + fpp)`.
pub fn payload_bits(kind: CompressorKind, dim: usize, entries: usize, bm: &BitModel) -> u64 {
    match kind {
        CompressorKind::Identity => dim as u64 * u64::from(bm.fpp),
        CompressorKind::TopK | CompressorKind::SparsifiedK => {
            entries as u64 * u64::from(bm.index_bits + bm.fpp)
        }
    }
}

/// Per-round Top-K contraction factors over a trace of pre-compression vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTrace {
    /// `(round, alpha)` for every nonzero round.
    pub alphas: Vec<(usize, f64)>,
    /// Rounds whose vector was zero.
    pub skipped: Vec<usize>,
    /// Rounds with `alpha = 0`, where the strict-dominance hypothesis fails.
    pub violations: Vec<usize>,
}

impl AlphaTrace {
    /// Smallest realized alpha, the conservative value for the error-feedback bound.
    pub fn min_alpha(&self) -> Option<f64> {
        self.alphas.iter().map(|&(_, a)| a).min_by(f64::total_cmp)
    }
}

pub fn estimate_alpha_trace(trace: &[Vec<f64>], k: usize) -> Result<AlphaTrace> {
    if trace.is_empty() {
        return Err(out_of_range("alpha trace needs at least one round".into()));
    }
    let mut out = AlphaTrace {
        alphas: Vec::with_capacity(trace.len()),
        skipped: Vec::new(),
        violations: Vec::new(),
    };
    for (round, v) in trace.iter().enumerate() {
        match contraction_alpha(v, k) {
            Ok(alpha) => {
                if alpha == 0.0 {
                    out.violations.push(round);
                }
                out.alphas.push((round, alpha));
            }
            Err(Error::ZeroVector) => out.skipped.push(round),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
