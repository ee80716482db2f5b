//! Compressed federated synchronous Q-learning.
//!
//! Each round the server broadcasts `Q_bar`, every agent runs `K` local
//! synchronous Q-learning epochs from it, compresses its progress
//! `Q_K - Q_bar` (directly, or with error feedback) and the server applies
//! `Q_bar += beta / I * sum_i h_i`.
//!
//! Agents run in parallel on the current rayon pool. Every random draw comes
//! from a stream keyed by `(seed, agent, round, epoch)` and the server sums
//! uploads in ascending agent order, so traces do not depend on scheduling.

use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{payload_bits, BitModel};
use crate::bellman::{empirical_bellman, rmse};
use crate::compression::{
    direct_compress, ef_compress, CompressorConstants, CompressorKind, CompressorSpec, EfState,
    SparseVector,
};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::qtable::QTable;
use crate::rng::{RngStream, StreamPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// Upload `Compress(Q_K - Q_bar)`.
    Direct,
    /// Upload `Compress(Q_K - Q_bar + e)` and keep the residual in `e`.
    ErrorFeedback,
}

impl FeedbackMode {
    /// Unbiased compressors go with direct uploads, biased ones with error feedback.
    pub fn paired_with(kind: CompressorKind) -> Self {
        match kind {
            CompressorKind::TopK => FeedbackMode::ErrorFeedback,
            CompressorKind::Identity | CompressorKind::SparsifiedK => FeedbackMode::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialQ {
    Zeros,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub federated_param: f64,
    pub gamma: f64,
    pub compressor: CompressorSpec,
    pub mode: FeedbackMode,
    /// Permit Top-K without error feedback or Sparsified-K with it.
    pub allow_unpaired: bool,
    pub master_seed: u64,
    pub q0: InitialQ,
    /// Bits per transmitted value.
    pub fpp: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_agents: 50,
            local_epochs: 1,
            rounds: 10_000,
            learning_rate: 0.01,
            federated_param: 0.8,
            gamma: 0.8,
            compressor: CompressorSpec::identity(),
            mode: FeedbackMode::Direct,
            allow_unpaired: false,
            master_seed: 0,
            q0: InitialQ::Zeros,
            fpp: 32,
        }
    }
}

impl ExperimentConfig {
    /// Sets the compressor together with its default upload mode.
    pub fn with_compressor(mut self, spec: CompressorSpec) -> Self {
        self.compressor = spec;
        self.mode = FeedbackMode::paired_with(spec.kind);
        self
    }

    pub fn initial_q(&self, n_states: usize, n_actions: usize) -> QTable {
        match self.q0 {
            InitialQ::Zeros => QTable::zeros(n_states, n_actions),
            InitialQ::Constant(c) => QTable::constant(n_states, n_actions, c),
        }
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_agents == 0 || self.local_epochs == 0 || self.rounds == 0 {
            return bad("n_agents, local_epochs and rounds must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            ));
        }
        if !(self.federated_param > 0.0 && self.federated_param <= 1.0) {
            return bad(format!(
                "federated_param must lie in (0, 1], got {}",
                self.federated_param
            ));
        }
        if self.gamma != mdp.gamma() {
            return bad(format!(
                "config gamma {} differs from the MDP discount {}",
                self.gamma,
                mdp.gamma()
            ));
        }
        if self.fpp == 0 {
            return bad("fpp must be at least 1".into());
        }
        self.compressor.validate(mdp.dim())?;
        if self.compressor.kind != CompressorKind::Identity
            && self.mode != FeedbackMode::paired_with(self.compressor.kind)
            && !self.allow_unpaired
        {
            return bad(format!(
                "{} with {:?} uploads needs allow_unpaired",
                self.compressor, self.mode
            ));
        }
        if let InitialQ::Constant(c) = self.q0 {
            let cap = mdp.r_max() / (1.0 - mdp.gamma());
            if !(c.abs() <= cap) {
                return bad(format!(
                    "|Q0| = {} exceeds r_max / (1 - gamma) = {cap}",
                    c.abs()
                ));
            }
        }
        Ok(())
    }
}

/// Metrics recorded after each aggregation; round 0 is the initial table.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub rmse: f64,
    /// `||Q_bar - Q*||_inf`.
    pub linf_error: f64,
    /// Uplink bits of one agent this round.
    pub bits_round: u64,
    pub bits_cumulative: u64,
    /// Stored pairs per agent this round (mean over agents, rounded up).
    pub payload_entries: usize,
}

/// Compressor constants realized in one round, worst case over agents.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundCompression {
    /// Smallest Top-K contraction factor.
    pub alpha_min: Option<f64>,
    /// Smallest support selection probability of Sparsified-K.
    pub p_min: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    /// One entry per round `1..=T`.
    pub compression: Vec<RoundCompression>,
    pub final_q: QTable,
    pub runtime_secs: f64,
}

impl RunOutput {
    pub fn alpha_min(&self) -> Option<f64> {
        self.compression
            .iter()
            .filter_map(|c| c.alpha_min)
            .min_by(f64::total_cmp)
    }

    pub fn p_min(&self) -> Option<f64> {
        self.compression
            .iter()
            .filter_map(|c| c.p_min)
            .min_by(f64::total_cmp)
    }
}

/// One synchronous Q-learning epoch: `Q + eta (T_k(Q) - Q)` on all entries at
/// once, where `T_k` reads the epoch-start table.
pub fn local_epoch(q: &QTable, mdp: &TabularMdp, eta: f64, rng: &mut RngStream) -> Result<QTable> {
    let samples = mdp.synchronous_sample(rng);
    let target = empirical_bellman(q, &samples, mdp.gamma())?;
    if eta == 1.0 {
        return Ok(target);
    }
    let mut out = q.clone();
    for (x, t) in out.as_mut_slice().iter_mut().zip(target.as_slice()) {
        *x += eta * (t - *x);
    }
    Ok(out)
}

/// Where a local phase draws its samples from.
#[derive(Debug, Clone, Copy)]
pub struct LocalContext<'a> {
    pub mdp: &'a TabularMdp,
    pub learning_rate: f64,
    pub master_seed: u64,
    pub agent: usize,
    pub round: usize,
}

/// `K` local epochs from `q_bar`, epoch `k` using stream `(agent, round, k)`.
pub fn run_local_phase(
    q_bar: &QTable,
    local_epochs: usize,
    ctx: &LocalContext<'_>,
) -> Result<QTable> {
    let mut q = q_bar.clone();
    for epoch in 0..local_epochs {
        let mut rng = RngStream::new(
            ctx.master_seed,
            StreamPath::sampling(ctx.agent, ctx.round, epoch),
        );
        q = local_epoch(&q, ctx.mdp, ctx.learning_rate, &mut rng)?;
    }
    Ok(q)
}

/// `Q_bar + beta / I * sum_i h_i`, summed in list order.
pub fn aggregate(q_bar: &QTable, uploads: &[SparseVector], beta: f64) -> Result<QTable> {
    if uploads.is_empty() {
        return Err(Error::EmptyAgentList);
    }
    let d = q_bar.as_slice().len();
    let mut sum = vec![0.0; d];
    for h in uploads {
        if h.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: h.dim(),
            });
        }
        h.add_to(&mut sum, 1.0);
    }
    let scale = beta / uploads.len() as f64;
    let mut out = q_bar.clone();
    for (x, s) in out.as_mut_slice().iter_mut().zip(&sum) {
        *x += scale * s;
    }
    Ok(out)
}

struct AgentState {
    id: usize,
    ef: Option<EfState>,
}

struct Upload {
    h: SparseVector,
    constants: Option<CompressorConstants>,
}

impl AgentState {
    fn round(
        &mut self,
        q_bar: &QTable,
        round: usize,
        config: &ExperimentConfig,
        mdp: &TabularMdp,
    ) -> Result<Upload> {
        let ctx = LocalContext {
            mdp,
            learning_rate: config.learning_rate,
            master_seed: config.master_seed,
            agent: self.id,
            round,
        };
        let q_local = run_local_phase(q_bar, config.local_epochs, &ctx)?;
        let delta = q_local.difference(q_bar)?;
        let mut rng = RngStream::new(config.master_seed, StreamPath::compression(self.id, round));
        let spec = &config.compressor;
        Ok(match self.ef.as_mut() {
            Some(ef) => {
                let input: Vec<f64> = delta.iter().zip(ef.error()).map(|(d, e)| d + e).collect();
                let constants = CompressorConstants::for_input(spec, &input);
                let h = ef_compress(ef, &delta, spec, &mut rng)?;
                Upload { h, constants }
            }
            None => Upload {
                constants: CompressorConstants::for_input(spec, &delta),
                h: direct_compress(&delta, spec, &mut rng)?,
            },
        })
    }
}

pub fn run_compfedrl(
    config: &ExperimentConfig,
    mdp: &TabularMdp,
    q_star: &QTable,
) -> Result<RunOutput> {
    run_compfedrl_observed(config, mdp, q_star, |_, _| {})
}

/// Like [`run_compfedrl`], calling `observer(t, &Q_bar_t)` for `t = 0..=T`.
pub fn run_compfedrl_observed(
    config: &ExperimentConfig,
    mdp: &TabularMdp,
    q_star: &QTable,
    mut observer: impl FnMut(usize, &QTable),
) -> Result<RunOutput> {
    config.validate(mdp)?;
    let start = Instant::now();
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    let d = mdp.dim();
    let bit_model = BitModel::new(d, config.fpp);

    let mut q_bar = config.initial_q(n_states, n_actions);
    q_bar.ensure_shape(q_star)?;

    let mut agents: Vec<AgentState> = (0..config.n_agents)
        .map(|id| AgentState {
            id,
            ef: (config.mode == FeedbackMode::ErrorFeedback).then(|| EfState::new(d)),
        })
        .collect();

    let mut metrics = Vec::with_capacity(config.rounds + 1);
    let mut compression = Vec::with_capacity(config.rounds);
    let mut bits_cumulative = 0u64;
    let record =
        |round: usize, q: &QTable, bits_round: u64, bits_cumulative: u64, entries: usize| {
            Ok::<_, Error>(RoundMetrics {
                round,
                rmse: rmse(q, q_star)?,
                linf_error: q.linf_distance(q_star)?,
                bits_round,
                bits_cumulative,
                payload_entries: entries,
            })
        };
    observer(0, &q_bar);
    metrics.push(record(0, &q_bar, 0, 0, 0)?);

    for round in 0..config.rounds {
        let snapshot = &q_bar;
        let uploads: Vec<Upload> = agents
            .par_iter_mut()
            .map(|agent| agent.round(snapshot, round, config, mdp))
            .collect::<Result<_>>()?;

        let total_entries: usize = uploads.iter().map(|u| u.h.nnz()).sum();
        let entries = total_entries.div_ceil(config.n_agents);
        let bits_round = payload_bits(config.compressor.kind, d, entries, &bit_model);
        bits_cumulative += bits_round;

        let mut stats = RoundCompression::default();
        for c in uploads.iter().filter_map(|u| u.constants) {
            match config.compressor.kind {
                CompressorKind::TopK => {
                    stats.alpha_min = Some(stats.alpha_min.map_or(c.alpha, |a| a.min(c.alpha)))
                }
                CompressorKind::SparsifiedK => {
                    let p = 1.0 / (1.0 + c.q2);
                    stats.p_min = Some(stats.p_min.map_or(p, |m| m.min(p)))
                }
                CompressorKind::Identity => {}
            }
        }
        compression.push(stats);

        let hs: Vec<SparseVector> = uploads.into_iter().map(|u| u.h).collect();
        q_bar = aggregate(&q_bar, &hs, config.federated_param)?;
        observer(round + 1, &q_bar);
        metrics.push(record(
            round + 1,
            &q_bar,
            bits_round,
            bits_cumulative,
            entries,
        )?);
    }

    Ok(RunOutput {
        metrics,
        compression,
        final_q: q_bar,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
