//! Runs every (grid point, seed) of a manifest and writes its outputs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::RunManifest;
use super::output::{aggregate_csv, overlay_csv, trace_csv, RunSummary};
use super::qstar::compute_qstar;
use crate::analysis::{bound_curve, BoundKind, BoundParams};
use crate::compression::{CompressorKind, CompressorSpec, ProbabilityRule};
use crate::engine::{run_compfedrl, ExperimentConfig, FeedbackMode, RunOutput};
use crate::error::{Error, Result};
use crate::grid::{build_gridworld, parse_map};
use crate::mdp::TabularMdp;
use crate::qtable::QTable;

/// Cache directory for `Q*` tables below an output directory.
pub const QSTAR_CACHE_DIR: &str = ".qstar_cache";

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    /// Every file written, in write order.
    pub files: Vec<PathBuf>,
    pub runs: usize,
    pub qstar_from_cache: bool,
}

fn compressor_tag(spec: &CompressorSpec) -> String {
    match (spec.kind, spec.rule) {
        (CompressorKind::Identity, _) => "identity".into(),
        (CompressorKind::TopK, _) => format!("top{}", spec.k),
        (CompressorKind::SparsifiedK, ProbabilityRule::L1) => format!("sparsified{}", spec.k),
        (CompressorKind::SparsifiedK, ProbabilityRule::Uniform) => format!("sparsifiedu{}", spec.k),
    }
}

fn mode_tag(mode: FeedbackMode) -> &'static str {
    match mode {
        FeedbackMode::Direct => "direct",
        FeedbackMode::ErrorFeedback => "ef",
    }
}

/// Deterministic file-name stem of a grid point.
pub fn slug(map_stem: &str, cfg: &ExperimentConfig) -> String {
    format!(
        "{map_stem}_I{}_K{}_T{}_eta{}_beta{}_{}_{}",
        cfg.n_agents,
        cfg.local_epochs,
        cfg.rounds,
        cfg.learning_rate,
        cfg.federated_param,
        compressor_tag(&cfg.compressor),
        mode_tag(cfg.mode)
    )
}

/// Theory curve matching the compressor and upload mode of a finished run.
/// Pairings without a guarantee (Top-K without memory, Sparsified-K with it)
/// and violated contraction hypotheses yield `+inf`.
pub fn theory_overlay(
    cfg: &ExperimentConfig,
    mdp: &TabularMdp,
    q_star: &QTable,
    out: &RunOutput,
    delta: f64,
) -> Result<Vec<f64>> {
    let q0 = cfg.initial_q(mdp.n_states(), mdp.n_actions());
    let mut params = BoundParams {
        beta: cfg.federated_param,
        eta: cfg.learning_rate,
        gamma: cfg.gamma,
        local_epochs: cfg.local_epochs,
        rounds: cfg.rounds,
        agents: cfg.n_agents,
        delta,
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        q2: 0.0,
        q_inf: 0.0,
        alpha: 1.0,
        q0_gap: q0.linf_distance(q_star)?,
        reward_scale: mdp.r_max(),
    };
    let kind = match (cfg.compressor.kind, cfg.mode) {
        (CompressorKind::Identity, FeedbackMode::Direct) => Some(BoundKind::Unbiased),
        (CompressorKind::Identity, FeedbackMode::ErrorFeedback) => Some(BoundKind::ErrorFeedback),
        (CompressorKind::SparsifiedK, FeedbackMode::Direct) => {
            if let Some(p) = out.p_min() {
                params.q2 = 1.0 / p - 1.0;
                params.q_inf = params.q2.max(1.0);
            }
            Some(BoundKind::Unbiased)
        }
        (CompressorKind::TopK, FeedbackMode::ErrorFeedback) => match out.alpha_min() {
            Some(a) if a > 0.0 => {
                params.alpha = a;
                Some(BoundKind::ErrorFeedback)
            }
            Some(_) => None,
            None => Some(BoundKind::ErrorFeedback),
        },
        _ => None,
    };
    let rounds: Vec<usize> = out.metrics.iter().map(|m| m.round).collect();
    match kind {
        Some(kind) => bound_curve(&params, kind, &rounds),
        None => Ok(vec![f64::INFINITY; rounds.len()]),
    }
}

struct Job {
    point: usize,
    config: ExperimentConfig,
}

struct Written {
    files: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
}

impl Written {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn rollback(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(dir) = &self.created_dir {
            let _ = fs::remove_dir_all(dir);
        }
    }
}

/// Runs the base configuration (`sweep = false`) or the full sweep product.
/// Work is spread over the current rayon pool; outputs do not depend on its size.
/// Files written by a failing invocation are removed.
pub fn run_experiment(manifest: &RunManifest, sweep: bool) -> Result<RunReport> {
    let map_text = manifest.map.load()?;
    let grid = parse_map(&map_text)?;
    let mdp = build_gridworld(&grid, manifest.noise, manifest.config.gamma)?;

    let points = manifest.grid_points(sweep);
    let stem = manifest.map.stem();
    let slugs: Vec<String> = points.iter().map(|p| slug(&stem, p)).collect();
    if slugs.iter().collect::<BTreeSet<_>>().len() != slugs.len() {
        return Err(Error::InvalidConfig(
            "sweep contains duplicate grid points".into(),
        ));
    }
    let n_runs = points.len() * manifest.n_seeds;
    if n_runs > manifest.max_runs {
        return Err(Error::InvalidConfig(format!(
            "{n_runs} runs exceed max_runs = {}",
            manifest.max_runs
        )));
    }
    for p in &points {
        p.validate(&mdp)?;
    }

    let out_dir = &manifest.output_dir;
    let mut written = Written {
        files: Vec::new(),
        created_dir: (!out_dir.exists()).then(|| out_dir.clone()),
    };
    let result = execute(
        manifest,
        &map_text,
        &mdp,
        &points,
        &slugs,
        &stem,
        &mut written,
    );
    match result {
        Ok(qstar_from_cache) => Ok(RunReport {
            output_dir: out_dir.clone(),
            files: written.files,
            runs: n_runs,
            qstar_from_cache,
        }),
        Err(e) => {
            written.rollback();
            Err(e)
        }
    }
}

fn execute(
    manifest: &RunManifest,
    map_text: &str,
    mdp: &TabularMdp,
    points: &[ExperimentConfig],
    slugs: &[String],
    stem: &str,
    written: &mut Written,
) -> Result<bool> {
    let out_dir = &manifest.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let qstar = compute_qstar(
        map_text,
        manifest.config.gamma,
        manifest.qstar_tol,
        &out_dir.join(QSTAR_CACHE_DIR),
    )?;
    let q_star = &qstar.q;

    let jobs: Vec<Job> = points
        .iter()
        .enumerate()
        .flat_map(|(point, cfg)| {
            (0..manifest.n_seeds as u64).map(move |s| Job {
                point,
                config: ExperimentConfig {
                    master_seed: cfg.master_seed.wrapping_add(s),
                    ..cfg.clone()
                },
            })
        })
        .collect();

    let results: Vec<(RunOutput, Vec<f64>)> = jobs
        .par_iter()
        .map(|job| {
            let out = run_compfedrl(&job.config, mdp, q_star)?;
            let bound = theory_overlay(&job.config, mdp, q_star, &out, manifest.bound_delta)?;
            Ok((out, bound))
        })
        .collect::<Result<_>>()?;

    for (job, (out, bound)) in jobs.iter().zip(&results) {
        let cfg = &job.config;
        let name = format!("{}_seed{}", slugs[job.point], cfg.master_seed);
        written.write(
            out_dir.join(format!("{name}.csv")),
            &trace_csv(&out.metrics),
        )?;
        written.write(
            out_dir.join(format!("{name}_bound.csv")),
            &overlay_csv(&out.metrics, bound),
        )?;
        let last = out.metrics.last().expect("trace has round 0");
        let summary = RunSummary {
            slug: slugs[job.point].clone(),
            map: stem.to_owned(),
            seed: cfg.master_seed,
            n_agents: cfg.n_agents,
            local_epochs: cfg.local_epochs,
            rounds: cfg.rounds,
            learning_rate: cfg.learning_rate,
            federated_param: cfg.federated_param,
            gamma: cfg.gamma,
            compressor: cfg.compressor.to_string(),
            mode: mode_tag(cfg.mode).to_owned(),
            noise_std: manifest.noise.std,
            noise_clip: manifest.noise.clip,
            final_rmse: last.rmse,
            final_linf_error: last.linf_error,
            total_bits_per_agent: last.bits_cumulative,
            alpha_min: out.alpha_min(),
            p_min: out.p_min(),
            final_theory_bound: bound.last().copied().filter(|b| b.is_finite()),
            runtime_secs: out.runtime_secs,
        };
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::InvalidConfig(format!("summary serialization: {e}")))?;
        written.write(out_dir.join(format!("{name}.json")), &json)?;
    }

    for (point, slug) in slugs.iter().enumerate() {
        let traces: Vec<&[_]> = jobs
            .iter()
            .zip(&results)
            .filter(|(j, _)| j.point == point)
            .map(|(_, (out, _))| out.metrics.as_slice())
            .collect();
        written.write(
            out_dir.join(format!("{slug}_agg.csv")),
            &aggregate_csv(&traces),
        )?;
    }
    Ok(qstar.from_cache)
}

/// Writes `<stem>_qstar.csv` and `<stem>_policy.csv` for a map file.
pub fn export_qstar(
    map_path: &Path,
    gamma: f64,
    tol: f64,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, super::qstar::QStar)> {
    let text = fs::read_to_string(map_path).map_err(|e| Error::io(map_path, e))?;
    let qs = compute_qstar(&text, gamma, tol, &out_dir.join(QSTAR_CACHE_DIR))?;
    let stem = map_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "map".into());
    let q_path = out_dir.join(format!("{stem}_qstar.csv"));
    let p_path = out_dir.join(format!("{stem}_policy.csv"));
    fs::write(&q_path, qs.q.to_csv()).map_err(|e| Error::io(&q_path, e))?;
    fs::write(&p_path, qs.policy.to_csv()).map_err(|e| Error::io(&p_path, e))?;
    Ok((vec![q_path, p_path], qs))
}
