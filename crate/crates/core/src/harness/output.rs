//! Trace, aggregate, overlay and summary file formats.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::RoundMetrics;

pub const TRACE_HEADER: &str = "round,rmse,linf_error,bits_round,bits_cumulative,payload_entries";
pub const AGG_HEADER: &str =
    "round,rmse_mean,rmse_std,rmse_min,rmse_max,linf_mean,bits_cumulative_mean";
pub const OVERLAY_HEADER: &str = "round,empirical_linf,theory_bound";

pub fn trace_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.round, m.rmse, m.linf_error, m.bits_round, m.bits_cumulative, m.payload_entries
        )
        .unwrap();
    }
    out
}

/// Mean, population standard deviation and range of RMSE across seeds, per round.
pub fn aggregate_csv(traces: &[&[RoundMetrics]]) -> String {
    let mut out = format!("{AGG_HEADER}\n");
    let Some(first) = traces.first() else {
        return out;
    };
    let n = traces.len() as f64;
    for (row, m0) in first.iter().enumerate() {
        let rmses: Vec<f64> = traces.iter().map(|t| t[row].rmse).collect();
        let mean = rmses.iter().sum::<f64>() / n;
        let var = rmses.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let min = rmses.iter().copied().fold(f64::INFINITY, f64::min);
        let max = rmses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let linf = traces.iter().map(|t| t[row].linf_error).sum::<f64>() / n;
        let bits = traces
            .iter()
            .map(|t| t[row].bits_cumulative as f64)
            .sum::<f64>()
            / n;
        writeln!(
            out,
            "{},{mean},{},{min},{max},{linf},{bits}",
            m0.round,
            var.sqrt()
        )
        .unwrap();
    }
    out
}

pub fn overlay_csv(metrics: &[RoundMetrics], bound: &[f64]) -> String {
    let mut out = format!("{OVERLAY_HEADER}\n");
    for (m, b) in metrics.iter().zip(bound) {
        writeln!(out, "{},{},{}", m.round, m.linf_error, b).unwrap();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub slug: String,
    pub map: String,
    pub seed: u64,
    pub n_agents: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub federated_param: f64,
    pub gamma: f64,
    pub compressor: String,
    pub mode: String,
    pub noise_std: f64,
    pub noise_clip: f64,
    pub final_rmse: f64,
    pub final_linf_error: f64,
    pub total_bits_per_agent: u64,
    pub alpha_min: Option<f64>,
    pub p_min: Option<f64>,
    pub final_theory_bound: Option<f64>,
    pub runtime_secs: f64,
}
